"""Miniature instrumented parser for a small C subset.

Statements: ``;``, blocks, ``if``/``else``, ``while``, ``return``, ``int``/
``char`` declarations and expression statements. Expressions use C
precedence for assignment, ternary, binary, unary and postfix operators.
Bytes <= 0x20 and 0x7f count as whitespace; ``/* */`` and ``//`` comments
are skipped.

Seeded fault: an empty parenthesised expression in operand position, e.g.
``x = ();`` or ``();`` (a call ``f()`` is fine).
"""
from ..coverage import SiteTable
from . import Reject, SeededFault, register

S = SiteTable("csub")
MAX_DEPTH = 32
KEYWORDS = {b"if", b"else", b"while", b"return", b"int", b"char"}
_IDENT_START = b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ_"
_IDENT_CHAR = _IDENT_START + b"0123456789"
_DIGITS = b"0123456789"
_PUNCT2 = {b"==", b"!=", b"<=", b">=", b"&&", b"||", b"++", b"--", b"<<", b">>", b"->",
           b"+=", b"-=", b"*=", b"/="}
_PUNCT1 = set(b";,(){}[]=+-*/%<>!&|^~?:.")
_BINARY = [
    {b"||"}, {b"&&"}, {b"|"}, {b"^"}, {b"&"}, {b"==", b"!="},
    {b"<", b">", b"<=", b">="}, {b"<<", b">>"}, {b"+", b"-"}, {b"*", b"/", b"%"},
]
_ASSIGN = {b"=", b"+=", b"-=", b"*=", b"/="}
_UNARY = {b"-", b"+", b"!", b"~", b"*", b"&", b"++", b"--"}


def _is_space(c):
    return c <= 0x20 or c == 0x7F


class _Lexer:
    def __init__(self, data, hit):
        self.s = data
        self.n = len(data)
        self.i = 0
        self.hit = hit

    def fail(self, site, msg):
        self.hit(S[site])
        raise Reject(f"{msg} at offset {self.i}")

    def skip(self):
        while self.i < self.n:
            c = self.s[self.i]
            if _is_space(c):
                self.hit(S["lex_ws"])
                self.i += 1
            elif self.s.startswith(b"//", self.i):
                self.hit(S["lex_line_comment"])
                end = self.s.find(b"\n", self.i)
                self.i = self.n if end < 0 else end + 1
            elif self.s.startswith(b"/*", self.i):
                self.hit(S["lex_block_comment"])
                end = self.s.find(b"*/", self.i + 2)
                if end < 0:
                    self.fail("lex_comment_eof", "unterminated comment")
                self.i = end + 2
            else:
                return

    def next(self):
        """Return (kind, text) with kind in {'id', 'kw', 'num', 'char', 'p', 'eof'}."""
        self.skip()
        if self.i >= self.n:
            self.hit(S["lex_eof"])
            return ("eof", b"")
        c = self.s[self.i]
        start = self.i
        if c in _IDENT_START:
            while self.i < self.n and self.s[self.i] in _IDENT_CHAR:
                self.hit(S["lex_ident_char"])
                self.i += 1
            text = self.s[start:self.i]
            if text in KEYWORDS:
                self.hit(S["lex_kw_" + text.decode()])
                return ("kw", text)
            return ("id", text)
        if c in _DIGITS:
            while self.i < self.n and self.s[self.i] in _DIGITS:
                self.hit(S["lex_digit"])
                self.i += 1
            if self.i < self.n and self.s[self.i] in _IDENT_START:
                self.fail("lex_bad_suffix", "bad number suffix")
            return ("num", self.s[start:self.i])
        if c == ord("'"):
            self.hit(S["lex_char"])
            self.i += 1
            if self.i < self.n and self.s[self.i] == ord("\\"):
                self.hit(S["lex_char_escape"])
                self.i += 1
            self.i += 1
            if self.i >= self.n or self.s[self.i] != ord("'"):
                self.fail("lex_char_unterminated", "bad character constant")
            self.i += 1
            return ("num", self.s[start:self.i])
        two = self.s[self.i:self.i + 2]
        if two in _PUNCT2:
            self.hit(S["lex_p2"])
            self.i += 2
            return ("p", two)
        if c in _PUNCT1:
            self.hit(S["lex_p1"])
            self.i += 1
            return ("p", bytes([c]))
        self.fail("lex_bad_char", "stray character")


class _Parser:
    def __init__(self, data, tracer):
        self.hit = tracer.hit
        self.lex = _Lexer(data, self.hit)
        self.tok = self.lex.next()
        self.depth = 0

    def fail(self, site, msg):
        self.hit(S[site])
        raise Reject(f"{msg} near {self.tok[1]!r}")

    def advance(self):
        self.tok = self.lex.next()

    def at(self, text):
        return self.tok[0] in ("p", "kw") and self.tok[1] == text

    def expect(self, text, site):
        if not self.at(text):
            self.fail(site, f"expected {text.decode()!r}")
        self.advance()

    def enter(self):
        self.depth += 1
        if self.depth > MAX_DEPTH:
            self.fail("too_deep", "nesting too deep")

    def program(self):
        self.hit(S["start"])
        while self.tok[0] != "eof":
            self.statement()
        self.hit(S["accept"])

    def statement(self):
        self.enter()
        kind, text = self.tok
        if kind == "p" and text == b";":
            self.hit(S["stmt_empty"])
            self.advance()
        elif kind == "p" and text == b"{":
            self.hit(S["stmt_block"])
            self.advance()
            while not self.at(b"}"):
                if self.tok[0] == "eof":
                    self.fail("block_eof", "unterminated block")
                self.statement()
            self.advance()
        elif kind == "kw" and text == b"if":
            self.hit(S["stmt_if"])
            self.advance()
            self.expect(b"(", "if_lparen")
            self.expression()
            self.expect(b")", "if_rparen")
            self.statement()
            if self.at(b"else"):
                self.hit(S["stmt_else"])
                self.advance()
                self.statement()
        elif kind == "kw" and text == b"while":
            self.hit(S["stmt_while"])
            self.advance()
            self.expect(b"(", "while_lparen")
            self.expression()
            self.expect(b")", "while_rparen")
            self.statement()
        elif kind == "kw" and text == b"return":
            self.hit(S["stmt_return"])
            self.advance()
            if not self.at(b";"):
                self.expression()
            self.expect(b";", "return_semi")
        elif kind == "kw" and text in (b"int", b"char"):
            self.declaration()
        elif kind == "kw":
            self.fail("stmt_misplaced_kw", "misplaced keyword")
        else:
            self.hit(S["stmt_expr"])
            self.expression()
            self.expect(b";", "expr_semi")
        self.depth -= 1

    def declaration(self):
        self.hit(S["decl"])
        self.advance()
        while True:
            while self.at(b"*"):
                self.hit(S["decl_ptr"])
                self.advance()
            if self.tok[0] != "id":
                self.fail("decl_name", "expected declarator name")
            self.advance()
            if self.at(b"["):
                self.hit(S["decl_array"])
                self.advance()
                if self.tok[0] != "num":
                    self.fail("decl_array_size", "expected array size")
                self.advance()
                self.expect(b"]", "decl_array_close")
            if self.at(b"="):
                self.hit(S["decl_init"])
                self.advance()
                self.assignment()
            if self.at(b","):
                self.hit(S["decl_comma"])
                self.advance()
                continue
            self.expect(b";", "decl_semi")
            return

    def expression(self):
        self.enter()
        self.assignment()
        while self.at(b","):
            self.hit(S["expr_comma"])
            self.advance()
            self.assignment()
        self.depth -= 1

    def assignment(self):
        self.ternary()
        if self.tok[0] == "p" and self.tok[1] in _ASSIGN:
            self.hit(S["assign"])
            self.advance()
            self.assignment()

    def ternary(self):
        self.binary(0)
        if self.at(b"?"):
            self.hit(S["ternary"])
            self.advance()
            self.expression()
            self.expect(b":", "ternary_colon")
            self.ternary()

    def binary(self, level):
        if level == len(_BINARY):
            return self.unary()
        self.binary(level + 1)
        while self.tok[0] == "p" and self.tok[1] in _BINARY[level]:
            self.hit(S[f"binop_{level}"])
            self.advance()
            self.binary(level + 1)

    def unary(self):
        if self.tok[0] == "p" and self.tok[1] in _UNARY:
            self.enter()
            self.hit(S["unary_" + self.tok[1].decode()])
            self.advance()
            self.unary()
            self.depth -= 1
            return
        self.postfix()

    def postfix(self):
        self.primary()
        while True:
            if self.at(b"("):
                self.hit(S["call"])
                self.advance()
                if not self.at(b")"):
                    self.assignment()
                    while self.at(b","):
                        self.hit(S["call_arg"])
                        self.advance()
                        self.assignment()
                self.expect(b")", "call_rparen")
            elif self.at(b"["):
                self.hit(S["index"])
                self.advance()
                self.expression()
                self.expect(b"]", "index_close")
            elif self.at(b".") or self.at(b"->"):
                self.hit(S["member"])
                self.advance()
                if self.tok[0] != "id":
                    self.fail("member_name", "expected member name")
                self.advance()
            elif self.at(b"++") or self.at(b"--"):
                self.hit(S["postinc"])
                self.advance()
            else:
                return

    def primary(self):
        kind, text = self.tok
        if kind == "id":
            self.hit(S["prim_id"])
            self.advance()
        elif kind == "num":
            self.hit(S["prim_num"])
            self.advance()
        elif kind == "p" and text == b"(":
            self.hit(S["prim_paren"])
            self.advance()
            if self.at(b")"):
                self.hit(S["prim_paren_empty"])
                raise SeededFault("empty parenthesised expression")
            self.expression()
            self.expect(b")", "paren_close")
        elif kind == "eof":
            self.fail("prim_eof", "unexpected end of input")
        else:
            self.fail("prim_bad", "expected an operand")


@register("csub", "an empty parenthesised expression in operand position, e.g. 'x = ();' or '();'")
def parse(data, tracer):
    _Parser(data, tracer).program()
