"""Tokenizer for certifier source files (.cf)."""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Union


class ParseError(Exception):
    def __init__(self, message: str, line: int, col: int, expected: Optional[set[str]] = None):
        self.message = message
        self.line = line
        self.col = col
        self.expected = expected or set()
        loc = f"{line}:{col}"
        if self.expected:
            message = f"{message} (expected one of: {', '.join(sorted(self.expected))})"
        super().__init__(f"{loc}: {message}")


KEYWORDS = {
    "Def", "shape", "as", "Func", "Transformer", "Flow",
    "forward", "backward", "maximize", "minimize",
    "sym", "true", "false", "and", "or", "not",
    "traverse", "solver", "map", "mapList", "dot", "concat", "compare",
    "max", "min", "sum", "avg", "len",
    "Int", "Real", "Bool", "Neuron", "Sym", "PolyExp", "SymExp", "Ct",
}

SYMBOLS = [
    "<>", "<=", ">=", "==", "->", "=", "(", ")", "[", "]", "{", "}",
    ",", ";", ":", "?", "+", "-", "*", "/", "<", ">", ".",
]


@dataclass
class Token:
    kind: str          # "ident" | "keyword" | "number" | symbol text | "eof"
    text: str
    value: Union[Fraction, None]
    line: int
    col: int


def tokenize(source: str) -> list[Token]:
    tokens: list[Token] = []
    i = 0
    line = 1
    col = 1
    n = len(source)
    while i < n:
        c = source[i]
        if c == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if c in " \t\r":
            i += 1
            col += 1
            continue
        if source.startswith("//", i):
            while i < n and source[i] != "\n":
                i += 1
            continue
        if c.isdigit() or (c == "." and i + 1 < n and source[i + 1].isdigit()):
            start = i
            start_col = col
            while i < n and source[i].isdigit():
                i += 1
            if i < n and source[i] == "." and i + 1 < n and source[i + 1].isdigit():
                i += 1
                while i < n and source[i].isdigit():
                    i += 1
            text = source[start:i]
            col += i - start
            tokens.append(Token("number", text, Fraction(text), line, start_col))
            continue
        if c.isalpha() or c == "_":
            start = i
            start_col = col
            while i < n and (source[i].isalnum() or source[i] == "_"):
                i += 1
            text = source[start:i]
            col += i - start
            kind = "keyword" if text in KEYWORDS else "ident"
            tokens.append(Token(kind, text, None, line, start_col))
            continue
        for sym in SYMBOLS:
            if source.startswith(sym, i):
                tokens.append(Token(sym, sym, None, line, col))
                i += len(sym)
                col += len(sym)
                break
        else:
            raise ParseError(f"unexpected character {c!r}", line, col)
    tokens.append(Token("eof", "", None, line, col))
    return tokens
