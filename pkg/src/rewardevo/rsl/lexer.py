"""Tokenizer with Python-style indentation blocks.

Newlines inside brackets are implicit continuations; comment-only and blank
lines produce no tokens. Indentation may mix spaces and tabs (tabs advance to
the next multiple of 8), but dedents must return to an enclosing level.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import RslParseError

KEYWORDS = {
    "if",
    "elif",
    "else",
    "for",
    "in",
    "return",
    "and",
    "or",
    "not",
    "True",
    "False",
}

# Longest-match first.
_OPERATORS = (
    "**",
    "<=",
    ">=",
    "==",
    "!=",
    "+",
    "-",
    "*",
    "/",
    "%",
    "(",
    ")",
    "[",
    "]",
    "{",
    "}",
    ",",
    ":",
    ".",
    "<",
    ">",
    "=",
)


@dataclass(frozen=True)
class Token:
    kind: str  # NAME KEYWORD NUMBER STRING OP NEWLINE INDENT DEDENT EOF
    value: str
    line: int
    col: int


def _indent_width(text: str, line: int) -> int:
    width = 0
    for ch in text:
        if ch == " ":
            width += 1
        elif ch == "\t":
            width = (width // 8 + 1) * 8
        else:
            raise RslParseError("bad indentation character", line, width + 1)
    return width


def tokenize(source: str) -> list[Token]:
    tokens: list[Token] = []
    indents = [0]
    depth = 0  # bracket nesting; suppresses NEWLINE/INDENT handling
    lines = source.split("\n")

    for lineno, raw in enumerate(lines, start=1):
        i = 0
        n = len(raw)
        # Leading indentation (only outside brackets).
        if depth == 0:
            j = 0
            while j < n and raw[j] in " \t":
                j += 1
            rest = raw[j:]
            if not rest or rest.startswith("#"):
                continue  # blank or comment-only line
            width = _indent_width(raw[:j], lineno)
            if width > indents[-1]:
                indents.append(width)
                tokens.append(Token("INDENT", "", lineno, 1))
            else:
                while width < indents[-1]:
                    indents.pop()
                    tokens.append(Token("DEDENT", "", lineno, 1))
                if width != indents[-1]:
                    raise RslParseError("inconsistent dedent", lineno, j + 1)
            i = j
        emitted = False
        while i < n:
            ch = raw[i]
            if ch in " \t":
                i += 1
                continue
            if ch == "#":
                break
            col = i + 1
            if ch.isdigit() or (ch == "." and i + 1 < n and raw[i + 1].isdigit()):
                j = i
                seen_dot = False
                seen_exp = False
                while j < n:
                    c = raw[j]
                    if c.isdigit():
                        j += 1
                    elif c == "." and not seen_dot and not seen_exp:
                        seen_dot = True
                        j += 1
                    elif c in "eE" and not seen_exp and j > i:
                        seen_exp = True
                        j += 1
                        if j < n and raw[j] in "+-":
                            j += 1
                    else:
                        break
                text = raw[i:j]
                try:
                    float(text)
                except ValueError:
                    raise RslParseError(f"bad number literal {text!r}", lineno, col)
                tokens.append(Token("NUMBER", text, lineno, col))
                i = j
                emitted = True
                continue
            if ch.isalpha() or ch == "_":
                j = i
                while j < n and (raw[j].isalnum() or raw[j] == "_"):
                    j += 1
                text = raw[i:j]
                kind = "KEYWORD" if text in KEYWORDS else "NAME"
                tokens.append(Token(kind, text, lineno, col))
                i = j
                emitted = True
                continue
            if ch in "'\"":
                quote = ch
                j = i + 1
                buf = []
                closed = False
                while j < n:
                    c = raw[j]
                    if c == "\\" and j + 1 < n:
                        nxt = raw[j + 1]
                        if nxt in ("\\", "'", '"'):
                            buf.append(nxt)
                            j += 2
                            continue
                    if c == quote:
                        closed = True
                        j += 1
                        break
                    buf.append(c)
                    j += 1
                if not closed:
                    raise RslParseError("unterminated string", lineno, col)
                tokens.append(Token("STRING", "".join(buf), lineno, col))
                i = j
                emitted = True
                continue
            matched = None
            for op in _OPERATORS:
                if raw.startswith(op, i):
                    matched = op
                    break
            if matched is None:
                raise RslParseError(f"unexpected character {ch!r}", lineno, col)
            if matched in "([{":
                depth += 1
            elif matched in ")]}":
                depth = max(0, depth - 1)
            tokens.append(Token("OP", matched, lineno, col))
            i += len(matched)
            emitted = True
        if emitted and depth == 0:
            tokens.append(Token("NEWLINE", "", lineno, n + 1))

    last_line = len(lines)
    while len(indents) > 1:
        indents.pop()
        tokens.append(Token("DEDENT", "", last_line, 1))
    tokens.append(Token("EOF", "", last_line, 1))
    return tokens
