"""Miniature instrumented JSON parser.

Seeded fault: an object member whose key is the empty string and whose
value is a negative number, e.g. ``{"":-1}``.
"""
from ..coverage import SiteTable
from . import Reject, SeededFault, register

S = SiteTable("json")
MAX_DEPTH = 32
_WS = b" \t\n\r"
_DIGITS = b"0123456789"
_ESCAPES = b'"\\/bfnrt'
_HEX = b"0123456789abcdefABCDEF"


class _Parser:
    def __init__(self, data, tracer):
        self.s = data
        self.n = len(data)
        self.i = 0
        self.hit = tracer.hit

    def peek(self):
        return self.s[self.i] if self.i < self.n else -1

    def fail(self, site, msg):
        self.hit(S[site])
        raise Reject(f"{msg} at offset {self.i}")

    def ws(self):
        while self.i < self.n and self.s[self.i] in _WS:
            self.hit(S["ws"])
            self.i += 1

    def document(self):
        self.hit(S["start"])
        self.ws()
        self.value(0)
        self.ws()
        if self.i != self.n:
            self.fail("trailing", "trailing data")
        self.hit(S["accept"])

    def value(self, depth):
        if depth > MAX_DEPTH:
            self.fail("too_deep", "nesting too deep")
        c = self.peek()
        if c == -1:
            self.fail("eof_value", "unexpected end of input")
        if c == ord("{"):
            self.hit(S["obj"])
            return self.obj(depth + 1)
        if c == ord("["):
            self.hit(S["arr"])
            return self.arr(depth + 1)
        if c == ord('"'):
            self.hit(S["str_value"])
            return self.string()
        if c == ord("-") or c in _DIGITS:
            self.hit(S["num"])
            return self.number()
        if c == ord("t"):
            return self.literal(b"true")
        if c == ord("f"):
            return self.literal(b"false")
        if c == ord("n"):
            return self.literal(b"null")
        self.fail("bad_value", "unexpected character")

    def literal(self, word):
        self.hit(S["lit_" + word.decode()])
        for ch in word:
            if self.peek() != ch:
                self.fail("lit_mismatch", "bad literal")
            self.hit(S["lit_char"])
            self.i += 1
        return word.decode()

    def string(self):
        self.i += 1  # opening quote
        out = bytearray()
        while True:
            c = self.peek()
            if c == -1:
                self.fail("str_eof", "unterminated string")
            if c == ord('"'):
                self.hit(S["str_end"])
                self.i += 1
                return bytes(out)
            if c < 0x20:
                self.fail("str_ctrl", "control character in string")
            if c == ord("\\"):
                self.hit(S["str_escape"])
                self.i += 1
                e = self.peek()
                if e == ord("u"):
                    self.hit(S["str_unicode"])
                    self.i += 1
                    for _ in range(4):
                        if self.peek() not in _HEX:
                            self.fail("str_bad_hex", "bad unicode escape")
                        self.hit(S["str_hex"])
                        self.i += 1
                    out += b"?"
                    continue
                if e == -1 or e not in _ESCAPES:
                    self.fail("str_bad_escape", "bad escape")
                self.i += 1
                out.append(e)
                continue
            self.hit(S["str_char"])
            out.append(c)
            self.i += 1

    def number(self):
        start = self.i
        if self.peek() == ord("-"):
            self.hit(S["num_minus"])
            self.i += 1
        c = self.peek()
        if c == ord("0"):
            self.hit(S["num_zero"])
            self.i += 1
        elif c != -1 and c in b"123456789":
            while self.peek() != -1 and self.peek() in _DIGITS:
                self.hit(S["num_digit"])
                self.i += 1
        else:
            self.fail("num_no_digits", "expected digit")
        if self.peek() == ord("."):
            self.hit(S["num_frac"])
            self.i += 1
            if self.peek() == -1 or self.peek() not in _DIGITS:
                self.fail("num_frac_empty", "expected fraction digits")
            while self.peek() != -1 and self.peek() in _DIGITS:
                self.hit(S["num_frac_digit"])
                self.i += 1
        if self.peek() in (ord("e"), ord("E")):
            self.hit(S["num_exp"])
            self.i += 1
            if self.peek() in (ord("+"), ord("-")):
                self.hit(S["num_exp_sign"])
                self.i += 1
            if self.peek() == -1 or self.peek() not in _DIGITS:
                self.fail("num_exp_empty", "expected exponent digits")
            while self.peek() != -1 and self.peek() in _DIGITS:
                self.hit(S["num_exp_digit"])
                self.i += 1
        return self.s[start:self.i]

    def obj(self, depth):
        self.i += 1
        self.ws()
        if self.peek() == ord("}"):
            self.hit(S["obj_empty"])
            self.i += 1
            return {}
        members = {}
        while True:
            if self.peek() != ord('"'):
                self.fail("obj_key_expected", "expected string key")
            self.hit(S["obj_key"])
            key = self.string()
            self.ws()
            if self.peek() != ord(":"):
                self.fail("obj_colon_expected", "expected ':'")
            self.hit(S["obj_colon"])
            self.i += 1
            self.ws()
            if key == b"" and self.peek() == ord("-"):
                self.hit(S["obj_empty_key_neg"])
                raw = self.value(depth)
                raise SeededFault(f"negative number {raw!r} under empty key")
            members[key] = self.value(depth)
            self.ws()
            c = self.peek()
            if c == ord(","):
                self.hit(S["obj_comma"])
                self.i += 1
                self.ws()
                continue
            if c == ord("}"):
                self.hit(S["obj_end"])
                self.i += 1
                return members
            self.fail("obj_sep_expected", "expected ',' or '}'")

    def arr(self, depth):
        self.i += 1
        self.ws()
        if self.peek() == ord("]"):
            self.hit(S["arr_empty"])
            self.i += 1
            return []
        items = []
        while True:
            self.hit(S["arr_item"])
            items.append(self.value(depth))
            self.ws()
            c = self.peek()
            if c == ord(","):
                self.hit(S["arr_comma"])
                self.i += 1
                self.ws()
                continue
            if c == ord("]"):
                self.hit(S["arr_end"])
                self.i += 1
                return items
            self.fail("arr_sep_expected", "expected ',' or ']'")


@register("json", 'an object member with an empty key whose value is a negative number, e.g. {"":-1}')
def parse(data, tracer):
    _Parser(data, tracer).document()
