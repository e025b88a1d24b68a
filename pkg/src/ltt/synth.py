"""Synthetic MiniLang programs with author-specific habits.

The generator mimics small contest-style solutions: a few helper functions
over integer arrays, a ``main`` that reads input and prints results. Each
author has stable naming preferences (loop variables, accumulators, arrays)
and idioms (``++i`` or ``i = i + 1``, ``len(xs)`` or a length parameter), and
variable uses favour recently declared or assigned names. These are the
regularities the context and scope features are meant to pick up.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

INT_NAMES = ["n", "m", "k", "x", "y", "count", "total", "sum", "best", "res", "result", "ans", "cnt",
             "idx", "pos", "cur", "prev", "tmp", "val", "size", "lo", "hi", "mid", "d", "diff", "steps",
             "score", "acc", "num", "c", "p", "q", "t", "w", "h", "left", "right", "limit", "target",
             "carry", "digit", "rem", "prod", "maxVal", "minVal", "start", "end", "step", "len0", "value"]
ARRAY_NAMES = ["xs", "arr", "nums", "a", "data", "values", "vals", "items", "counts", "dp", "memo",
               "dist", "ys", "b", "seen", "grid", "row", "heights", "weights", "cost"]
BOOL_NAMES = ["found", "ok", "done", "flag", "valid", "good", "isPrime", "changed", "hit", "first"]
STRING_NAMES = ["s", "name", "msg", "text", "out", "line", "word", "label", "buf", "str0"]
LOOP_SETS = [["i", "j", "k"], ["i", "j", "k"], ["i", "j", "k"], ["idx", "jdx", "kdx"], ["ii", "jj", "kk"],
             ["r", "c", "d"], ["x", "y", "z"], ["p", "q", "u"], ["a", "b", "e"], ["i", "k", "m"]]
FN_VERBS = ["count", "sum", "find", "get", "calc", "compute", "check", "solve", "best", "max", "min",
            "total", "score", "search", "build", "update", "merge", "eval", "pick", "fill"]
FN_NOUNS = ["Pairs", "Max", "Min", "Sum", "Value", "Index", "Steps", "Cost", "Path", "Items", "Range",
            "Digits", "Odd", "Even", "Prefix", "Diff", "Score", "Total", "Count", "Best"]
GLOBAL_NAMES = ["MOD", "INF", "LIMIT", "MAXN", "calls", "offset", "base", "seed0"]
STRING_LITERALS = ['""', '" "', '"yes"', '"no"', '"Case"', '"-"', '","', '"x"', '"ok"', '"none"']

BUILTINS = {  # name -> (return type, argument types)
    "print": (None, ["any"]),
    "len": ("int", ["int[]"]),
    "abs": ("int", ["int"]),
    "max": ("int", ["int", "int"]),
    "min": ("int", ["int", "int"]),
    "readInts": ("int[]", []),
    "readInt": ("int", []),
    "str": ("string", ["int"]),
    "newArray": ("int[]", ["int"]),
}


def _zipf(rng, n: int, s: float = 1.3) -> np.ndarray:
    w = 1.0 / np.arange(1, n + 1) ** s
    return w / w.sum()


@dataclass
class Habits:
    """Stable preferences of one author."""

    loop_vars: list
    names: dict            # type -> preference-ordered name list
    weights: dict          # type -> matching probabilities
    plus_one: float        # chance of "i = i + 1" instead of "++ i"
    use_len: float         # chance of len(xs) as a loop bound
    while_rate: float
    literals: list
    literal_w: np.ndarray
    recency: float         # decay of the use probability with declaration rank
    accumulate: float      # chance an assignment is "v = v op expr"

    @classmethod
    def draw(cls, rng: np.random.Generator) -> "Habits":
        names, weights = {}, {}
        for t, pool in (("int", INT_NAMES), ("int[]", ARRAY_NAMES), ("bool", BOOL_NAMES),
                        ("string", STRING_NAMES)):
            order = list(rng.permutation(pool))
            names[t] = order
            weights[t] = _zipf(rng, len(order), rng.uniform(0.6, 1.2))
        lits = ["0", "1", "2", "10", "100", "3", "5", "1000", "7", "4"]
        lits = lits[:2] + list(rng.permutation(lits[2:]))
        return cls(
            loop_vars=list(LOOP_SETS[rng.integers(len(LOOP_SETS))]),
            names=names, weights=weights,
            plus_one=float(rng.choice([0.05, 0.1, 0.9])),
            use_len=float(rng.uniform(0.1, 0.9)),
            while_rate=float(rng.uniform(0.02, 0.2)),
            literals=lits, literal_w=_zipf(rng, len(lits), 1.5),
            recency=float(rng.uniform(0.35, 0.6)),
            accumulate=float(rng.uniform(0.3, 0.7)),
        )


@dataclass
class _Var:
    name: str
    type: str
    declared: int
    assigned: int


@dataclass
class _Env:
    frames: list = field(default_factory=lambda: [[]])
    clock: int = 0
    functions: dict = field(default_factory=dict)

    def declare(self, name, type_):
        self.clock += 1
        self.frames[-1].append(_Var(name, type_, self.clock, self.clock))

    def visible(self, type_=None):
        seen, out = set(), []
        for frame in reversed(self.frames):
            for v in reversed(frame):
                if v.name not in seen:
                    seen.add(v.name)
                    if type_ is None or v.type == type_:
                        out.append(v)
        return out

    def names(self):
        return {v.name for f in self.frames for v in f} | set(self.functions)

    def assign(self, name):
        for frame in reversed(self.frames):
            for v in frame:
                if v.name == name:
                    self.clock += 1
                    v.assigned = self.clock
                    return


class ProgramGenerator:
    def __init__(self, habits: Habits, rng: np.random.Generator):
        self.h = habits
        self.rng = rng
        self.lines: list[str] = []
        self.indent = 0

    # -- helpers
    def chance(self, p: float) -> bool:
        return bool(self.rng.random() < p)

    def pick(self, items, p=None):
        return items[int(self.rng.choice(len(items), p=p))]

    def emit(self, text: str):
        self.lines.append("    " * self.indent + text)

    def fresh(self, env: _Env, type_: str) -> str:
        taken = env.names() | set(BUILTINS)
        names, w = self.h.names[type_], self.h.weights[type_]
        for _ in range(20):
            name = self.pick(names, w)
            if name not in taken and name not in self.h.loop_vars:
                return name
        for i in range(2, 100):
            name = f"{names[0]}{i}"
            if name not in taken:
                return name
        raise RuntimeError("name pool exhausted")

    def use(self, env: _Env, type_: str, exclude=()):
        cands = [v for v in env.visible(type_) if v.name not in exclude]
        if not cands:
            return None
        recent = sorted(cands, key=lambda v: -max(v.declared, v.assigned))
        w = self.h.recency ** np.arange(len(recent))
        return self.pick(recent, w / w.sum()).name

    def literal(self) -> str:
        return self.pick(self.h.literals, self.h.literal_w)

    # -- expressions
    def int_expr(self, env: _Env, depth: int = 0) -> str:
        r = self.rng.random()
        var = self.use(env, "int")
        arr = self.use(env, "int[]")
        if depth >= 2:
            r *= 0.6
        if r < 0.38 and var:
            return var
        if r < 0.55:
            return self.literal()
        if r < 0.68 and arr and var:
            return f"{arr} [ {var} ]"
        if r < 0.78:
            return self.call_expr(env, "int", depth) or self.literal()
        if depth < 2:
            op = self.pick(["+", "-", "*", "/", "%"], [0.45, 0.2, 0.15, 0.1, 0.1])
            left = self.int_expr(env, depth + 1)
            right = self.int_expr(env, depth + 1)
            if depth > 0 and self.chance(0.3):
                return f"( {left} {op} {right} )"
            return f"{left} {op} {right}"
        return var or self.literal()

    def bool_expr(self, env: _Env, depth: int = 0) -> str:
        r = self.rng.random()
        bvar = self.use(env, "bool")
        if r < 0.1 and bvar:
            return bvar
        if r < 0.15 and bvar:
            return f"! {bvar}"
        if r < 0.2:
            return self.pick(["true", "false"])
        if r < 0.3 and depth == 0:
            op = self.pick(["&&", "||"])
            return f"{self.bool_expr(env, 1)} {op} {self.bool_expr(env, 1)}"
        op = self.pick(["<", "<=", "==", "!="], [0.4, 0.15, 0.3, 0.15])
        left = self.int_expr(env, 1)
        if op in ("==", "!=") and self.chance(0.4):
            return f"{left} % 2 {op} {self.pick(['0', '1'])}"
        return f"{left} {op} {self.int_expr(env, 1)}"

    def string_expr(self, env: _Env, depth: int = 0) -> str:
        svar = self.use(env, "string")
        r = self.rng.random()
        if r < 0.4 and svar:
            return svar
        if r < 0.7 or depth > 0:
            return self.pick(STRING_LITERALS)
        return f"{svar or self.pick(STRING_LITERALS)} + str ( {self.int_expr(env, 1)} )"

    def expr(self, env: _Env, type_: str, depth: int = 0) -> str:
        if type_ == "int":
            return self.int_expr(env, depth)
        if type_ == "bool":
            return self.bool_expr(env, depth)
        if type_ == "string":
            return self.string_expr(env, depth)
        var = self.use(env, "int[]")
        if var and self.chance(0.3):
            return var
        if self.chance(0.5):
            return "readInts ( )"
        return f"newArray ( {self.int_expr(env, 1)} )"

    def call_expr(self, env: _Env, ret: str, depth: int):
        user = [f for f, (rt, _) in env.functions.items() if rt == ret]
        built = [f for f, (rt, _) in BUILTINS.items() if rt == ret]
        pool = user * 3 + built
        if not pool:
            return None
        name = self.pick(pool)
        _, args = env.functions.get(name) or BUILTINS[name]
        if any(a == "int[]" for a in args) and not self.use(env, "int[]"):
            return None
        parts = [self.expr(env, a, depth + 1) if a != "int[]" else self.use(env, "int[]") for a in args]
        return f"{name} ( {' , '.join(parts)} )" if parts else f"{name} ( )"

    # -- statements
    def block(self, env: _Env, depth: int, n: int, loop_var=None):
        self.emit("{")
        self.indent += 1
        env.frames.append([])
        for _ in range(n):
            self.statement(env, depth, loop_var)
        env.frames.pop()
        self.indent -= 1
        self.emit("}")

    def declaration(self, env: _Env):
        type_ = self.pick(["int", "int[]", "bool", "string"], [0.62, 0.12, 0.13, 0.13])
        name = self.fresh(env, type_)
        tname = "int [ ]" if type_ == "int[]" else type_
        if self.chance(0.85):
            value = self.expr(env, type_)
            self.emit(f"{tname} {name} = {value} ;")
        else:
            self.emit(f"{tname} {name} ;")
        env.declare(name, type_)

    def assignment(self, env: _Env, loop_var=None):
        cands = [v for v in env.visible() if v.type in ("int", "string", "bool") and v.name != loop_var]
        if not cands:
            return self.declaration(env)
        recent = sorted(cands, key=lambda v: -v.assigned)
        w = self.h.recency ** np.arange(len(recent))
        v = self.pick(recent, w / w.sum())
        if v.type == "int" and self.chance(self.h.accumulate):
            op = self.pick(["+", "-", "*"], [0.7, 0.15, 0.15])
            arr = self.use(env, "int[]")
            if arr and loop_var and self.chance(0.6):
                rhs = f"{arr} [ {loop_var} ]"
            else:
                rhs = self.int_expr(env, 1)
            self.emit(f"{v.name} = {v.name} {op} {rhs} ;")
        elif v.type == "string" and self.chance(0.5):
            self.emit(f"{v.name} = {v.name} + {self.string_expr(env, 1)} ;")
        else:
            self.emit(f"{v.name} = {self.expr(env, v.type)} ;")
        env.assign(v.name)

    def loop_bound(self, env: _Env) -> str:
        arr = self.use(env, "int[]")
        if arr and self.chance(self.h.use_len):
            return f"len ( {arr} )"
        var = self.use(env, "int", exclude=self.h.loop_vars)
        return var or self.literal()

    def for_loop(self, env: _Env, depth: int):
        used = {v.name for v in env.visible()}
        lv = next((v for v in self.h.loop_vars if v not in used), None)
        if lv is None:
            return self.assignment(env)
        bound = self.loop_bound(env)
        start = "0" if self.chance(0.85) else "1"
        cmp_ = "<" if self.chance(0.85) else "<="
        step = f"{lv} = {lv} + 1" if self.chance(self.h.plus_one) else f"++ {lv}"
        self.emit(f"for ( int {lv} = {start} ; {lv} {cmp_} {bound} ; {step} )")
        env.frames.append([])
        env.declare(lv, "int")
        self.block(env, depth + 1, int(self.rng.integers(1, 4)), loop_var=lv)
        env.frames.pop()

    def while_loop(self, env: _Env, depth: int):
        var = self.use(env, "int")
        if var is None:
            return self.declaration(env)
        self.emit(f"while ( {var} < {self.loop_bound(env)} )")
        self.emit("{")
        self.indent += 1
        env.frames.append([])
        for _ in range(int(self.rng.integers(1, 3))):
            self.statement(env, depth + 1)
        self.emit(f"{var} = {var} + 1 ;" if self.chance(self.h.plus_one) else f"++ {var} ;")
        env.frames.pop()
        self.indent -= 1
        self.emit("}")

    def if_statement(self, env: _Env, depth: int, loop_var=None):
        self.emit(f"if ( {self.bool_expr(env)} )")
        self.block(env, depth + 1, int(self.rng.integers(1, 3)), loop_var)
        if self.chance(0.25):
            self.emit("else")
            self.block(env, depth + 1, int(self.rng.integers(1, 3)), loop_var)

    def statement(self, env: _Env, depth: int, loop_var=None):
        weights = np.array([0.22, 0.3, 0.16 if depth < 3 else 0.0, self.h.while_rate if depth < 2 else 0.0,
                            0.16 if depth < 4 else 0.0, 0.1, 0.04])
        choice = int(self.rng.choice(len(weights), p=weights / weights.sum()))
        if choice == 0:
            self.declaration(env)
        elif choice == 1:
            self.assignment(env, loop_var)
        elif choice == 2:
            self.for_loop(env, depth)
        elif choice == 3:
            self.while_loop(env, depth)
        elif choice == 4:
            self.if_statement(env, depth, loop_var)
        elif choice == 5:
            arg = self.expr(env, self.pick(["int", "string"], [0.7, 0.3]), 1)
            self.emit(f"print ( {arg} ) ;")
        else:
            var = self.use(env, "int")
            if var and var != loop_var:
                self.emit(f"++ {var} ;")
                env.assign(var)
            else:
                self.declaration(env)

    def function(self, env: _Env, name: str, params: list, ret: str | None, n_stmts: int):
        self.emit(f"fn {name} ( {' , '.join(('int [ ]' if t == 'int[]' else t) + ' ' + p for p, t in params)} )"
                  if params else f"fn {name} ( )")
        self.emit("{")
        self.indent += 1
        env.frames.append([])
        for p, t in params:
            env.declare(p, t)
        if ret == "int" and self.chance(0.7):
            acc = self.fresh(env, "int")
            self.emit(f"int {acc} = {self.pick(['0', '0', '1'])} ;")
            env.declare(acc, "int")
        for _ in range(n_stmts):
            self.statement(env, 1)
        if ret is not None:
            if ret == "int":
                var = self.use(env, "int")
                self.emit(f"return {var or self.int_expr(env)} ;")
            else:
                self.emit(f"return {self.expr(env, ret)} ;")
        env.frames.pop()
        self.indent -= 1
        self.emit("}")
        env.functions[name] = (ret, [t for _, t in params])

    def program(self) -> str:
        env = _Env()
        for _ in range(int(self.rng.choice([0, 0, 1, 1, 2]))):
            name = self.pick(GLOBAL_NAMES)
            if name in env.names():
                continue
            self.emit(f"int {name} = {self.pick(['1000', '100', '0', '7', '1000000'])} ;")
            env.declare(name, "int")
        for _ in range(int(self.rng.integers(1, 4))):
            name = self.pick(FN_VERBS) + self.pick(FN_NOUNS)
            if name in env.names():
                continue
            params = []
            if self.chance(0.75):
                params.append((self.fresh(env, "int[]"), "int[]"))
            for _ in range(int(self.rng.integers(0, 3))):
                taken = env.names() | {p for p, _ in params}
                t = self.pick(["int", "int", "int", "bool", "string"])
                p = next((x for x in self.h.names[t] if x not in taken and x not in self.h.loop_vars), None)
                if p:
                    params.append((p, t))
            ret = self.pick(["int", "int", "int", "bool", None])
            self.function(env, name, params, ret, int(self.rng.integers(2, 6)))
            self.emit("")
        self.function(env, "main", [], None, int(self.rng.integers(2, 6)))
        return "\n".join(self.lines) + "\n"


def generate_corpus(n_programs: int = 400, n_authors: int = 20, seed: int = 0):
    """(author id, file stem, source text) triples; deterministic in ``seed``."""
    ss = np.random.SeedSequence(seed)
    author_seeds = ss.spawn(n_authors)
    habits = [Habits.draw(np.random.default_rng(s)) for s in author_seeds]
    rng = np.random.default_rng(ss.spawn(1)[0])
    out = []
    for i in range(n_programs):
        a = int(rng.integers(n_authors))
        prog_rng = np.random.default_rng([seed, i])
        text = ProgramGenerator(habits[a], prog_rng).program()
        out.append((f"u{a:02d}", f"p{i:04d}", text))
    return out


def write_corpus_dir(directory, n_programs: int = 400, n_authors: int = 20, seed: int = 0):
    """Write ``<author>/<stem>.ml0`` files and a ``users.jsonl`` sidecar."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rows = []
    for author, stem, text in generate_corpus(n_programs, n_authors, seed):
        rel = f"{author}/{stem}.ml0"
        (directory / author).mkdir(exist_ok=True)
        (directory / rel).write_text(text, encoding="utf-8")
        rows.append({"path": rel, "user": author})
    rows.sort(key=lambda r: r["path"])
    with open(directory / "users.jsonl", "w", encoding="utf-8") as f:
        for r in rows:
            f.write(json.dumps(r, sort_keys=True) + "\n")
    return rows
