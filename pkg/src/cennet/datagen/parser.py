"""Reader and writer for the line-oriented network grammar.

::

    # comment
    network <name>;
    variable <name> { states: s1, s2, ...; }
    probability ( <child> ) { table: v1, v2, ...; }
    probability ( <child> | <p1>, <p2> ) { (<p1-state>, <p2-state>): v1, v2, ...; ... }
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass

import numpy as np

from ..errors import BnParseError
from .network import BayesNet

ROW_TOLERANCE = 1e-6

_TOKEN = re.compile(r"\s+|#[^\n]*|(?P<word>[A-Za-z0-9_.+\-]+)|(?P<punct>[{}();:,|])|(?P<bad>.)")


@dataclass
class _Token:
    text: str
    kind: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    line, line_start = 1, 0
    for m in _TOKEN.finditer(text):
        kind = m.lastgroup
        if kind == "bad":
            raise BnParseError(f"unexpected character {m.group()!r}", line, m.start() - line_start + 1)
        if kind is not None:
            tokens.append(_Token(m.group(), kind, line, m.start() - line_start + 1))
        newlines = m.group().count("\n")
        if newlines:
            line += newlines
            line_start = m.start() + m.group().rfind("\n") + 1
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.pos = 0
        last = text.count("\n") + 1
        self._eof = _Token("<end of file>", "eof", last, 1)

    def peek(self) -> _Token:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else self._eof

    def next(self) -> _Token:
        tok = self.peek()
        self.pos += 1
        return tok

    def error(self, message: str, tok: _Token | None = None) -> BnParseError:
        tok = tok or self.peek()
        return BnParseError(message, tok.line, tok.col)

    def expect(self, text: str) -> _Token:
        tok = self.next()
        if tok.text != text:
            raise self.error(f"expected {text!r}, found {tok.text!r}", tok)
        return tok

    def word(self, what: str = "identifier") -> _Token:
        tok = self.next()
        if tok.kind != "word":
            raise self.error(f"expected {what}, found {tok.text!r}", tok)
        return tok

    def word_list(self, what: str) -> list[_Token]:
        items = [self.word(what)]
        while self.peek().text == ",":
            self.next()
            items.append(self.word(what))
        return items

    def number_list(self) -> list[tuple[float, _Token]]:
        out = []
        for tok in self.word_list("probability"):
            try:
                value = float(tok.text)
            except ValueError:
                raise self.error(f"expected a number, found {tok.text!r}", tok) from None
            if not 0.0 <= value <= 1.0:
                raise self.error(f"probability {tok.text} outside [0, 1]", tok)
            out.append((value, tok))
        return out


def _check_row(node: str, values: list[float], tok: _Token, expected: int) -> np.ndarray:
    if len(values) != expected:
        raise BnParseError(f"node {node!r}: row has {len(values)} entries, expected {expected}",
                           tok.line, tok.col)
    row = np.array(values, dtype=np.float64)
    total = row.sum()
    if abs(total - 1.0) > ROW_TOLERANCE:
        raise BnParseError(f"node {node!r}: CPT row sums to {total:.6g}, not 1", tok.line, tok.col)
    if abs(total - 1.0) > 1e-12:
        row = row / total
    return row


def parse_bn(text: str) -> BayesNet:
    """Parse network text into a validated :class:`BayesNet` (declaration order kept)."""
    p = _Parser(text)
    p.expect("network")
    name = p.word("network name").text
    p.expect(";")

    states: dict[str, tuple[str, ...]] = {}
    parents: dict[str, tuple[str, ...]] = {}
    cpts: dict[str, np.ndarray] = {}
    decl_tokens: dict[str, _Token] = {}

    while p.peek().kind != "eof":
        head = p.next()
        if head.text == "variable":
            tok = p.word("variable name")
            if tok.text in states:
                raise p.error(f"variable {tok.text!r} declared twice", tok)
            p.expect("{")
            p.expect("states")
            p.expect(":")
            labels = [t.text for t in p.word_list("state label")]
            if len(set(labels)) != len(labels):
                raise p.error(f"variable {tok.text!r} has duplicate states", tok)
            p.expect(";")
            p.expect("}")
            states[tok.text] = tuple(labels)
            decl_tokens[tok.text] = tok
        elif head.text == "probability":
            p.expect("(")
            child_tok = p.word("variable name")
            child = child_tok.text
            if child not in states:
                raise p.error(f"probability block for undeclared variable {child!r}", child_tok)
            if child in cpts:
                raise p.error(f"second probability block for {child!r}", child_tok)
            parent_toks: list[_Token] = []
            if p.peek().text == "|":
                p.next()
                parent_toks = p.word_list("parent name")
            p.expect(")")
            for t in parent_toks:
                if t.text not in states:
                    raise p.error(f"undeclared parent {t.text!r} of {child!r}", t)
            pnames = tuple(t.text for t in parent_toks)
            if len(set(pnames)) != len(pnames):
                raise p.error(f"duplicate parent in block for {child!r}", child_tok)
            k = len(states[child])
            p.expect("{")
            if not pnames:
                p.expect("table")
                p.expect(":")
                entries = p.number_list()
                p.expect(";")
                table = _check_row(child, [v for v, _ in entries], entries[0][1], k)
            else:
                shape = tuple(len(states[q]) for q in pnames)
                table = np.full(shape + (k,), np.nan)
                seen = set()
                while p.peek().text == "(":
                    open_tok = p.next()
                    cfg = p.word_list("parent state")
                    p.expect(")")
                    p.expect(":")
                    entries = p.number_list()
                    p.expect(";")
                    if len(cfg) != len(pnames):
                        raise p.error(f"node {child!r}: configuration needs {len(pnames)} states",
                                      open_tok)
                    idx = []
                    for q, t in zip(pnames, cfg):
                        if t.text not in states[q]:
                            raise p.error(f"unknown state {t.text!r} for parent {q!r}", t)
                        idx.append(states[q].index(t.text))
                    if tuple(idx) in seen:
                        raise p.error(f"node {child!r}: configuration repeated", open_tok)
                    seen.add(tuple(idx))
                    table[tuple(idx)] = _check_row(child, [v for v, _ in entries], entries[0][1], k)
                if len(seen) != int(np.prod(shape)):
                    missing = next(c for c in itertools.product(*(range(s) for s in shape)) if c not in seen)
                    labels = ", ".join(states[q][i] for q, i in zip(pnames, missing))
                    raise p.error(f"node {child!r}: no row for configuration ({labels})")
            p.expect("}")
            parents[child] = pnames
            cpts[child] = table
        else:
            raise p.error(f"expected 'variable' or 'probability', found {head.text!r}", head)

    for node, tok in decl_tokens.items():
        if node not in cpts:
            raise BnParseError(f"variable {node!r} has no probability block", tok.line, tok.col)
    bn = BayesNet(name=name, states=states, parents={n: parents[n] for n in states},
                  cpts={n: cpts[n] for n in states})
    cycle = bn.find_cycle()
    if cycle:
        tok = decl_tokens[cycle[0]]
        raise BnParseError("cycle detected: " + " -> ".join(cycle + [cycle[0]]), tok.line, tok.col)
    return bn


def emit_bn(bn: BayesNet) -> str:
    """Canonical text for ``bn``; ``parse_bn(emit_bn(bn))`` reproduces it exactly."""
    lines = [f"network {bn.name};", ""]
    for node in bn.nodes:
        lines.append(f"variable {node} {{ states: {', '.join(bn.states[node])}; }}")
    lines.append("")
    for node in bn.nodes:
        pa = bn.parents[node]
        table = bn.cpts[node]
        if not pa:
            lines.append(f"probability ( {node} ) {{")
            lines.append("  table: " + ", ".join(repr(float(v)) for v in table) + ";")
        else:
            lines.append(f"probability ( {node} | {', '.join(pa)} ) {{")
            for idx in itertools.product(*(range(len(bn.states[q])) for q in pa)):
                cfg = ", ".join(bn.states[q][i] for q, i in zip(pa, idx))
                lines.append(f"  ({cfg}): " + ", ".join(repr(float(v)) for v in table[idx]) + ";")
        lines.append("}")
    return "\n".join(lines) + "\n"
