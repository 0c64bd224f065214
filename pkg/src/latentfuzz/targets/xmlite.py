"""Miniature instrumented XML parser (elements, attributes, text, entities,
comments, processing instructions).

Seeded fault: a processing instruction whose target is ``xml`` appearing
inside element content, e.g. ``<a><?xml?></a>``.
"""
from ..coverage import SiteTable
from . import Reject, SeededFault, register

S = SiteTable("xmlite")
MAX_DEPTH = 32
_WS = b" \t\n\r"
_NAME_START = b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ_:"
_NAME_CHAR = _NAME_START + b"0123456789.-"
_ENTITIES = {b"lt", b"gt", b"amp", b"quot", b"apos"}


class _Parser:
    def __init__(self, data, tracer):
        self.s = data
        self.n = len(data)
        self.i = 0
        self.hit = tracer.hit

    def peek(self, off=0):
        j = self.i + off
        return self.s[j] if j < self.n else -1

    def startswith(self, lit):
        return self.s.startswith(lit, self.i)

    def fail(self, site, msg):
        self.hit(S[site])
        raise Reject(f"{msg} at offset {self.i}")

    def ws(self):
        while self.i < self.n and self.s[self.i] in _WS:
            self.hit(S["ws"])
            self.i += 1

    def name(self):
        if self.peek() == -1 or self.peek() not in _NAME_START:
            self.fail("name_start", "expected a name")
        start = self.i
        self.i += 1
        while self.peek() != -1 and self.peek() in _NAME_CHAR:
            self.hit(S["name_char"])
            self.i += 1
        if self.s[start] == ord(":"):
            self.hit(S["name_colon_prefix"])
        return self.s[start:self.i]

    def document(self):
        self.hit(S["start"])
        self.misc(prolog=True)
        if self.peek() != ord("<"):
            self.fail("no_root", "expected root element")
        self.element(0)
        self.misc(prolog=False)
        if self.i != self.n:
            self.fail("trailing", "content after root element")
        self.hit(S["accept"])

    def misc(self, prolog):
        while True:
            self.ws()
            if self.startswith(b"<!--"):
                self.comment()
            elif self.startswith(b"<?"):
                self.pi(in_content=False)
            else:
                return

    def comment(self):
        self.hit(S["comment"])
        self.i += 4
        end = self.s.find(b"-->", self.i)
        if end < 0:
            self.fail("comment_eof", "unterminated comment")
        if b"--" in self.s[self.i:end]:
            self.fail("comment_dashes", "'--' inside comment")
        self.i = end + 3

    def pi(self, in_content):
        self.hit(S["pi_content" if in_content else "pi"])
        self.i += 2
        target = self.name()
        if in_content and target.lower() == b"xml":
            self.hit(S["pi_xml_in_content"])
            raise SeededFault("xml declaration inside element content")
        end = self.s.find(b"?>", self.i)
        if end < 0:
            self.fail("pi_eof", "unterminated processing instruction")
        self.i = end + 2

    def attribute(self):
        self.hit(S["attr"])
        self.name()
        self.ws()
        if self.peek() != ord("="):
            self.fail("attr_eq", "expected '='")
        self.i += 1
        self.ws()
        q = self.peek()
        if q not in (ord('"'), ord("'")):
            self.fail("attr_quote", "expected quoted value")
        self.hit(S["attr_value"])
        self.i += 1
        while True:
            c = self.peek()
            if c == -1:
                self.fail("attr_eof", "unterminated attribute value")
            if c == q:
                self.i += 1
                return
            if c == ord("<"):
                self.fail("attr_lt", "'<' in attribute value")
            if c == ord("&"):
                self.entity()
                continue
            self.hit(S["attr_char"])
            self.i += 1

    def entity(self):
        self.hit(S["entity"])
        self.i += 1
        if self.peek() == ord("#"):
            self.hit(S["charref"])
            self.i += 1
            digits = 0
            while self.peek() != -1 and self.peek() in b"0123456789":
                self.hit(S["charref_digit"])
                self.i += 1
                digits += 1
            if digits == 0:
                self.fail("charref_empty", "empty character reference")
        else:
            name = self.name()
            if name not in _ENTITIES:
                self.fail("entity_unknown", "unknown entity")
            self.hit(S["entity_known"])
        if self.peek() != ord(";"):
            self.fail("entity_semicolon", "expected ';'")
        self.i += 1

    def element(self, depth):
        if depth > MAX_DEPTH:
            self.fail("too_deep", "nesting too deep")
        self.hit(S["elem"])
        self.i += 1  # '<'
        tag = self.name()
        while True:
            had_ws = self.i < self.n and self.s[self.i] in _WS
            self.ws()
            c = self.peek()
            if c == ord("/"):
                if self.peek(1) != ord(">"):
                    self.fail("empty_tag_gt", "expected '/>'")
                self.hit(S["elem_empty"])
                self.i += 2
                return
            if c == ord(">"):
                self.hit(S["elem_open_end"])
                self.i += 1
                break
            if not had_ws:
                self.fail("attr_ws", "expected whitespace before attribute")
            self.attribute()
        self.content(depth)
        # at "</"
        self.i += 2
        self.hit(S["elem_close"])
        close = self.name()
        if close != tag:
            self.fail("tag_mismatch", "mismatched closing tag")
        self.ws()
        if self.peek() != ord(">"):
            self.fail("close_gt", "expected '>'")
        self.hit(S["elem_closed"])
        self.i += 1

    def content(self, depth):
        while True:
            c = self.peek()
            if c == -1:
                self.fail("content_eof", "unclosed element")
            if c == ord("<"):
                if self.peek(1) == ord("/"):
                    return
                if self.startswith(b"<!--"):
                    self.comment()
                elif self.peek(1) == ord("?"):
                    self.pi(in_content=True)
                else:
                    self.element(depth + 1)
            elif c == ord("&"):
                self.entity()
            elif c == ord(">"):
                self.fail("text_gt", "stray '>' in text")
            else:
                self.hit(S["text"])
                self.i += 1


@register("xmlite", "a processing instruction with target 'xml' inside element content, e.g. <a><?xml?></a>")
def parse(data, tracer):
    _Parser(data, tracer).document()
