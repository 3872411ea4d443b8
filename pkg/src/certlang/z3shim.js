// SMT-LIB2 evaluation over the WASM build of Z3 (npm package `z3-solver`).
//
// One-shot mode (default): reads a script from stdin, writes the solver
// output, exits.
//
// Server mode (--server): reads scripts separated by lines that consist of
// (echo "===CF_DONE===") and answers each with the solver output followed
// by the ===CF_DONE=== sentinel. Each script gets a fresh context.
"use strict";
const fs = require("fs");

const SENTINEL = '(echo "===CF_DONE===")';

async function makeZ3() {
  const { init } = require("z3-solver");
  const { Z3, em } = await init();
  return { Z3, em };
}

async function evalScript(z3, text) {
  const cfg = z3.Z3.mk_config();
  const ctx = z3.Z3.mk_context(cfg);
  try {
    return await z3.Z3.eval_smtlib2_string(ctx, text);
  } finally {
    z3.Z3.del_context(ctx);
  }
}

async function oneShot() {
  const input = fs.readFileSync(0, "utf8");
  const z3 = await makeZ3();
  let out = "";
  try {
    out = await evalScript(z3, input);
  } catch (err) {
    process.stderr.write(String(err) + "\n");
    process.exitCode = 1;
  }
  process.stdout.write(out);
  if (z3.em.PThread && z3.em.PThread.terminateAllThreads) {
    z3.em.PThread.terminateAllThreads();
  }
  process.exit(process.exitCode || 0);
}

async function server() {
  const z3 = await makeZ3();
  let buffer = "";
  process.stdout.write("===CF_READY===\n");
  process.stdin.setEncoding("utf8");
  let queue = Promise.resolve();
  process.stdin.on("data", (chunk) => {
    buffer += chunk;
    let idx;
    while ((idx = buffer.indexOf(SENTINEL)) !== -1) {
      const script = buffer.slice(0, idx);
      buffer = buffer.slice(idx + SENTINEL.length);
      queue = queue.then(async () => {
        let out = "";
        try {
          out = await evalScript(z3, script);
        } catch (err) {
          out = '(error "' + String(err).replace(/"/g, "'") + '")\n';
        }
        if (!out.endsWith("\n") && out.length) out += "\n";
        process.stdout.write(out + "===CF_DONE===\n");
      });
    }
  });
  process.stdin.on("end", () => {
    queue.then(() => {
      if (z3.em.PThread && z3.em.PThread.terminateAllThreads) {
        z3.em.PThread.terminateAllThreads();
      }
      process.exit(0);
    });
  });
}

if (process.argv.includes("--server")) {
  server().catch((err) => {
    process.stderr.write(String(err) + "\n");
    process.exit(1);
  });
} else {
  oneShot().catch((err) => {
    process.stderr.write(String(err) + "\n");
    process.exit(1);
  });
}
