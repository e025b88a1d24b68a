"""MiniLang: a small C-like language used as the modeled source language.

Grammar (EBNF)::

    unit       := { funcdecl | vardecl } ;
    funcdecl   := "fn" Ident "(" [ param { "," param } ] ")" block ;
    param      := type Ident ;
    type       := "int" | "bool" | "string" | "int" "[" "]" ;
    block      := "{" { stmt } "}" ;
    stmt       := vardecl | ifstmt | forstmt | whilestmt | returnstmt | exprstmt | block ;
    vardecl    := type Ident [ "=" expr ] ";" ;
    ifstmt     := "if" "(" expr ")" stmt [ "else" stmt ] ;
    forstmt    := "for" "(" [ vardecl-no-semi | assign ] ";" expr ";" assignOrIncr ")" stmt ;
    whilestmt  := "while" "(" expr ")" stmt ;
    returnstmt := "return" [ expr ] ";" ;
    exprstmt   := expr ";" ;

Expressions use C precedence, lowest first: assignment (right associative),
``||``, ``&&``, ``== !=``, ``< <=``, ``+ -``, ``* / %``, unary ``- ! ++``,
postfix indexing. Every binary operator application becomes its own node kind
so that a node's kind alone fixes how it re-parses.
"""
from __future__ import annotations

from .trees import Node, Token, TokenKind, Tree

KEYWORDS = frozenset({"fn", "int", "bool", "string", "if", "else", "for", "while", "return"})
BOOL_WORDS = frozenset({"true", "false"})
TYPE_WORDS = ("int", "bool", "string")
# Longest first so that maximal munch is a prefix scan.
PUNCTUATION = ("++", "==", "!=", "<=", "&&", "||",
               "(", ")", "{", "}", "[", "]", ";", ",", "=", "+", "-", "*", "/", "%", "<", "!")

BINARY_LEVELS = [
    {"||": "LogicalOrExpression"},
    {"&&": "LogicalAndExpression"},
    {"==": "EqualsExpression", "!=": "NotEqualsExpression"},
    {"<": "LessThanExpression", "<=": "LessThanOrEqualExpression"},
    {"+": "AddExpression", "-": "SubtractExpression"},
    {"*": "MultiplyExpression", "/": "DivideExpression", "%": "ModuloExpression"},
]

STATEMENT_KINDS = frozenset({
    "LocalDeclarationStatement", "IfStatement", "ForStatement", "WhileStatement",
    "ReturnStatement", "ExpressionStatement", "Block",
})


class LexError(ValueError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{line}:{column}: {message}")
        self.line = line
        self.column = column


class MiniLangSyntaxError(ValueError):
    """Syntax error carrying the offending token position."""

    def __init__(self, message: str, position: int):
        super().__init__(message)
        self.position = position


def lex(text: str) -> list[Token]:
    tokens = []
    i, line, col = 0, 1, 1
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            i, line, col = i + 1, line + 1, 1
            continue
        if ch in " \t\r":
            i, col = i + 1, col + 1
            continue
        if text.startswith("//", i):
            while i < n and text[i] != "\n":
                i += 1
            continue
        start = i
        if ch.isascii() and (ch.isalpha() or ch == "_"):
            while i < n and text[i].isascii() and (text[i].isalnum() or text[i] == "_"):
                i += 1
            word = text[start:i]
            if word in KEYWORDS:
                kind = TokenKind.KEYWORD
            elif word in BOOL_WORDS:
                kind = TokenKind.BOOL_LITERAL
            else:
                kind = TokenKind.IDENTIFIER
            tokens.append(Token(word, kind))
        elif ch.isascii() and ch.isdigit():
            while i < n and text[i].isascii() and text[i].isdigit():
                i += 1
            tokens.append(Token(text[start:i], TokenKind.INT_LITERAL))
        elif ch == '"':
            i += 1
            while i < n and text[i] != '"':
                if text[i] == "\\":
                    i += 1
                if i < n and text[i] == "\n":
                    raise LexError("newline in string literal", line, col)
                i += 1
            if i >= n:
                raise LexError("unterminated string literal", line, col)
            i += 1
            tokens.append(Token(text[start:i], TokenKind.STRING_LITERAL))
        else:
            for p in PUNCTUATION:
                if text.startswith(p, i):
                    i += len(p)
                    tokens.append(Token(p, TokenKind.PUNCTUATION))
                    break
            else:
                raise LexError(f"illegal character {ch!r}", line, col)
        col += i - start
    return tokens


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.toks = tokens
        self.pos = 0

    # -- helpers
    def peek(self, offset: int = 0) -> Token | None:
        j = self.pos + offset
        return self.toks[j] if j < len(self.toks) else None

    def at(self, text: str, offset: int = 0) -> bool:
        t = self.peek(offset)
        return t is not None and t.text == text and t.kind in (TokenKind.KEYWORD, TokenKind.PUNCTUATION)

    def at_kind(self, kind: TokenKind, offset: int = 0) -> bool:
        t = self.peek(offset)
        return t is not None and t.kind == kind

    def error(self, expected: str):
        t = self.peek()
        found = "end of input" if t is None else repr(t.text)
        raise MiniLangSyntaxError(f"expected {expected} at token {self.pos}, found {found}", self.pos)

    def expect(self, text: str) -> Token:
        if not self.at(text):
            self.error(repr(text))
        tok = self.toks[self.pos]
        self.pos += 1
        return tok

    def take(self) -> Token:
        tok = self.toks[self.pos]
        self.pos += 1
        return tok

    def ident_token(self) -> Token:
        if not self.at_kind(TokenKind.IDENTIFIER):
            self.error("identifier")
        return self.take()

    def ident_name(self) -> Node:
        return Node("IdentifierName", (self.ident_token(),))

    def at_type(self) -> bool:
        t = self.peek()
        return t is not None and t.kind == TokenKind.KEYWORD and t.text in TYPE_WORDS

    # -- declarations
    def unit(self) -> Node:
        items = []
        while self.peek() is not None:
            if self.at("fn"):
                items.append(self.funcdecl())
            elif self.at_type():
                decl = self.vardecl()
                items.append(Node("FieldDeclaration", (decl, self.expect(";"))))
            else:
                self.error("'fn' or a type")
        return Node("CompilationUnit", tuple(items))

    def funcdecl(self) -> Node:
        fn = self.expect("fn")
        name = self.ident_token()
        params = [self.expect("(")]
        if not self.at(")"):
            params.append(self.param())
            while self.at(","):
                params.append(self.take())
                params.append(self.param())
        params.append(self.expect(")"))
        return Node("FunctionDecl", (fn, name, Node("ParamList", tuple(params)), self.block()))

    def param(self) -> Node:
        return Node("Param", (self.type_(), self.ident_name()))

    def type_(self) -> Node:
        if not self.at_type():
            self.error("a type")
        name = self.take()
        # the array type holds its tokens directly so that no other element type can be grafted in
        if name.text == "int" and self.at("[") and self.at("]", 1):
            return Node("ArrayType", (name, self.take(), self.take()))
        return Node("PredefinedType", (name,))

    def vardecl(self) -> Node:
        kids = [self.type_(), self.ident_name()]
        if self.at("="):
            kids.append(Node("EqualsValueClause", (self.take(), self.expr())))
        return Node("VariableDeclaration", tuple(kids))

    # -- statements
    def block(self) -> Node:
        kids = [self.expect("{")]
        while not self.at("}"):
            if self.peek() is None:
                self.error("'}'")
            kids.append(self.stmt())
        kids.append(self.take())
        return Node("Block", tuple(kids))

    def stmt(self) -> Node:
        if self.at_type():
            decl = self.vardecl()
            return Node("LocalDeclarationStatement", (decl, self.expect(";")))
        if self.at("{"):
            return self.block()
        if self.at("if"):
            kids = [self.take(), self.expect("("), self.expr(), self.expect(")"), self.stmt()]
            if self.at("else"):
                kids += [self.take(), self.stmt()]
            return Node("IfStatement", tuple(kids))
        if self.at("while"):
            return Node("WhileStatement",
                        (self.take(), self.expect("("), self.expr(), self.expect(")"), self.stmt()))
        if self.at("for"):
            kids = [self.take(), self.expect("(")]
            if self.at_type():
                kids.append(self.vardecl())
            elif self.at_kind(TokenKind.IDENTIFIER) and self.at("=", 1):
                kids.append(self.assign())
            kids.append(self.expect(";"))
            kids.append(self.expr())
            kids.append(self.expect(";"))
            if self.at("++"):
                kids.append(self.pre_increment())
            elif self.at_kind(TokenKind.IDENTIFIER) and self.at("=", 1):
                kids.append(self.assign())
            else:
                self.error("an assignment or '++'")
            kids.append(self.expect(")"))
            kids.append(self.stmt())
            return Node("ForStatement", tuple(kids))
        if self.at("return"):
            kids = [self.take()]
            if not self.at(";"):
                kids.append(self.expr())
            kids.append(self.expect(";"))
            return Node("ReturnStatement", tuple(kids))
        e = self.expr()
        return Node("ExpressionStatement", (e, self.expect(";")))

    # -- expressions
    def expr(self) -> Node:
        if self.at_kind(TokenKind.IDENTIFIER) and self.at("=", 1):
            return self.assign()
        return self.binary(0)

    def assign(self) -> Node:
        target = self.ident_name()
        eq = self.expect("=")
        return Node("AssignExpression", (target, eq, self.expr()))

    def pre_increment(self) -> Node:
        return Node("PreIncrementExpression", (self.expect("++"), self.ident_name()))

    def binary(self, level: int) -> Node:
        if level == len(BINARY_LEVELS):
            return self.unary()
        ops = BINARY_LEVELS[level]
        left = self.binary(level + 1)
        while True:
            t = self.peek()
            if t is None or t.kind != TokenKind.PUNCTUATION or t.text not in ops:
                return left
            self.take()
            left = Node(ops[t.text], (left, t, self.binary(level + 1)))

    def unary(self) -> Node:
        if self.at("-"):
            return Node("NegateExpression", (self.take(), self.unary()))
        if self.at("!"):
            return Node("LogicalNotExpression", (self.take(), self.unary()))
        if self.at("++"):
            return self.pre_increment()
        return self.postfix()

    def postfix(self) -> Node:
        e = self.primary()
        while self.at("["):
            e = Node("ElementAccessExpression", (e, self.take(), self.expr(), self.expect("]")))
        return e

    def primary(self) -> Node:
        t = self.peek()
        if t is None:
            self.error("an expression")
        if t.kind == TokenKind.IDENTIFIER:
            if self.at("(", 1):
                callee = self.ident_name()
                args = [self.expect("(")]
                if not self.at(")"):
                    args.append(Node("Argument", (self.expr(),)))
                    while self.at(","):
                        args.append(self.take())
                        args.append(Node("Argument", (self.expr(),)))
                args.append(self.expect(")"))
                return Node("InvocationExpression", (callee, Node("ArgumentList", tuple(args))))
            return self.ident_name()
        if t.kind in (TokenKind.INT_LITERAL, TokenKind.STRING_LITERAL, TokenKind.BOOL_LITERAL):
            return Node("Literal", (self.take(),))
        if self.at("("):
            return Node("ParenthesizedExpression", (self.take(), self.expr(), self.expect(")")))
        self.error("an expression")


def parse(text: str, root: str = "CompilationUnit") -> Tree:
    """Parse MiniLang source into a tree.

    ``root`` selects the start symbol: ``CompilationUnit`` for whole files, a
    statement kind for a single statement, anything else for an expression.
    The parsed node's kind must equal ``root``.
    """
    return parse_tokens(lex(text), root)


def parse_tokens(tokens: list[Token], root: str = "CompilationUnit") -> Tree:
    p = _Parser(tokens)
    if root == "CompilationUnit":
        node = p.unit()
    elif root in STATEMENT_KINDS:
        node = p.stmt()
    else:
        node = p.expr()
    if p.peek() is not None:
        p.error("end of input")
    if node.kind != root:
        raise MiniLangSyntaxError(f"input parses as {node.kind}, not {root}", 0)
    return Tree(node)


def unparse(tree: Tree) -> str:
    return " ".join(t.text for t in tree.tokens())
