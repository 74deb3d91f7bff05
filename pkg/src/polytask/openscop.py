"""Reader/writer for the OpenScop text dialect used as interchange format.

Relations are integer matrices whose first column marks equalities (0) and
inequalities (1). Statement text, original iterators and statement ids go
in a ``<body>`` extension; array names in an ``<arrays>`` extension.
"""
from __future__ import annotations


from .dsl import format_stmts, parse_statement
from .poly import EQ, GE, AffineExpr, Constraint, Polyhedron
from .scop import READ, WRITE, AccessRelation, Scop, ScopStatement


class FormatError(ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class DimensionMismatch(FormatError):
    pass


def _ints(expr: AffineExpr, cols: list[str]) -> list[int]:
    vals = [expr.coeff(c) for c in cols] + [expr.constant]
    for v in vals:
        if v.denominator != 1:
            raise ValueError(f"non-integer coefficient in {expr}")
    return [int(v) for v in vals]


def _row(values) -> str:
    return " ".join(f"{v:>3}" for v in values)


def _relation(kind: str, rows: list[list[int]], out_dims: int, in_dims: int,
              n_params: int, header: str) -> list[str]:
    ncols = 1 + out_dims + in_dims + n_params + 1
    lines = [kind, f"{len(rows)} {ncols} {out_dims} {in_dims} 0 {n_params}", header]
    lines += [_row(r) for r in rows]
    return lines


def write_openscop(s: Scop) -> str:
    params = list(s.params)
    array_ids = {name: k + 1 for k, (name, _) in enumerate(s.arrays)}
    out = ["<OpenScop>", "", "# =============================================== Global",
           "# Language", "DSL", "", "# Context"]
    ctx_rows = [[0 if c.is_eq else 1] + _ints(c.expr, params) for c in s.context.constraints]
    out += _relation("CONTEXT", ctx_rows, 0, 0, len(params), "# e/i| " + " ".join(params) + " | 1")
    out += ["", "# Parameters are provided", "1" if params else "0"]
    if params:
        out += ["<strings>", " ".join(params), "</strings>"]
    out += ["", "# Number of statements", str(len(s.statements))]
    for n, st in enumerate(s.statements, 1):
        it = list(st.iterators)
        cols = it + params
        out += ["", f"# =============================================== Statement {n}",
                "# Number of relations describing the statement:",
                str(2 + len(st.accesses)), ""]
        dom_rows = [[0 if c.is_eq else 1] + _ints(c.expr, cols) for c in st.domain.constraints]
        out += [f"# ----------------------------------------------  {n}.1 Domain"]
        out += _relation("DOMAIN", dom_rows, len(it), 0, len(params),
                         "# e/i| " + " ".join(cols) + " | 1")
        nsc = len(st.schedule)
        sc_rows = []
        for k, row in enumerate(st.schedule):
            lhs = [0] * nsc
            lhs[k] = -1
            sc_rows.append([0] + lhs + _ints(row, cols))
        out += ["", f"# ----------------------------------------------  {n}.2 Scattering"]
        out += _relation("SCATTERING", sc_rows, nsc, len(it), len(params),
                         f"# e/i| c1..c{nsc} | " + " ".join(cols) + " | 1")
        out += ["", f"# ----------------------------------------------  {n}.3 Access"]
        for acc in st.accesses:
            dims = 1 + len(acc.subscripts)
            rows = []
            head = [0] * dims
            head[0] = -1
            rows.append([0] + head + [0] * len(cols) + [array_ids[acc.array]])
            for k, sub in enumerate(acc.subscripts):
                lhs = [0] * dims
                lhs[k + 1] = -1
                rows.append([0] + lhs + _ints(sub, cols))
            out += _relation(acc.kind, rows, dims, len(it), len(params),
                             "# e/i| Arr " + "".join(f"[{k}]" for k in range(1, dims))
                             + " | " + " ".join(cols) + " | 1")
            out.append("")
        out += [f"# ----------------------------------------------  {n}.4 Statement Extensions",
                "# Number of Statement Extensions", "1", "<body>",
                "# Statement id", str(st.id),
                "# Number of original iterators", str(len(it)),
                "# List of original iterators", " ".join(it),
                "# Tile sizes", " ".join(map(str, st.tile_sizes)),
                "# Statement body expression", format_stmts([st.body]), "</body>"]
    out += ["", "# =============================================== Extensions", "<arrays>",
            "# Number of arrays", str(len(s.arrays)),
            "# Mapping array-identifiers/array-names"]
    out += [f"{array_ids[name]} {name} {rank}" for name, rank in s.arrays]
    out += ["</arrays>", "", "</OpenScop>"]
    return "\n".join(out) + "\n"


class _Lines:
    """Cursor over meaningful lines; comments and blanks are skipped except
    inside the body extension, where comment lines are labels."""

    def __init__(self, text: str):
        self.lines = text.split("\n")
        self.i = 0

    def next(self, keep_blank=False) -> tuple[str, int]:
        while self.i < len(self.lines):
            raw = self.lines[self.i]
            self.i += 1
            s = raw.strip()
            if (not s and not keep_blank) or s.startswith("#"):
                continue
            return s, self.i
        raise FormatError("unexpected end of file", self.i)

    def expect(self, token: str) -> int:
        s, ln = self.next()
        if s != token:
            raise FormatError(f"expected {token!r}, found {s!r}", ln)
        return ln

    def int(self) -> int:
        s, ln = self.next()
        try:
            return int(s)
        except ValueError:
            raise FormatError(f"expected integer, found {s!r}", ln) from None

    def raw_after_label(self) -> tuple[str, int]:
        """Line following the next comment label (may be empty)."""
        while self.i < len(self.lines):
            s = self.lines[self.i].strip()
            self.i += 1
            if s.startswith("#"):
                if self.i >= len(self.lines):
                    break
                val = self.lines[self.i].strip()
                self.i += 1
                return val, self.i
        raise FormatError("unexpected end of file in body", self.i)


def _read_relation(cur: _Lines, kind: str | tuple, n_params: int, in_dims=None):
    s, ln = cur.next()
    kinds = (kind,) if isinstance(kind, str) else kind
    if s not in kinds:
        raise FormatError(f"expected relation {'/'.join(kinds)}, found {s!r}", ln)
    head, hln = cur.next()
    try:
        nrows, ncols, out_d, in_d, loc_d, par = map(int, head.split())
    except ValueError:
        raise FormatError(f"bad relation header {head!r}", hln) from None
    if loc_d != 0:
        raise DimensionMismatch("local dimensions are not supported", hln)
    if par != n_params or ncols != 1 + out_d + in_d + par + 1:
        raise DimensionMismatch(f"relation has {ncols} columns, expected "
                                f"{1 + out_d + in_d + n_params + 1}", hln)
    if in_dims is not None and in_d != in_dims:
        raise DimensionMismatch(f"relation has {in_d} input dimensions, expected {in_dims}", hln)
    rows = []
    for _ in range(nrows):
        r, rln = cur.next()
        try:
            vals = [int(x) for x in r.split()]
        except ValueError:
            raise FormatError(f"bad matrix row {r!r}", rln) from None
        if len(vals) != ncols:
            raise DimensionMismatch(f"row has {len(vals)} entries, expected {ncols}", rln)
        rows.append(vals)
    return s, rows, out_d, in_d, ln


def _expr(vals: list[int], cols: list[str]) -> AffineExpr:
    return AffineExpr(dict(zip(cols, vals[:-1])), vals[-1])


def read_openscop(text: str) -> Scop:
    cur = _Lines(text)
    cur.expect("<OpenScop>")
    cur.next()  # language
    # context is read once the parameter names are known
    ctx_at = cur.i
    s, ln = cur.next()
    if s != "CONTEXT":
        raise FormatError(f"expected CONTEXT, found {s!r}", ln)
    head, hln = cur.next()
    try:
        nrows = int(head.split()[0])
        n_params = int(head.split()[5])
    except (ValueError, IndexError):
        raise FormatError(f"bad relation header {head!r}", hln) from None
    for _ in range(nrows):
        cur.next()
    provided = cur.int()
    params: list[str] = []
    if provided:
        cur.expect("<strings>")
        names, _ = cur.next()
        params = names.split()
        cur.expect("</strings>")
    if len(params) != n_params:
        raise DimensionMismatch(f"{len(params)} parameter names for {n_params} parameters", hln)
    after_params = cur.i
    cur.i = ctx_at
    _, rows, _, _, _ = _read_relation(cur, "CONTEXT", n_params)
    context = Polyhedron(tuple(params), tuple(
        Constraint(_expr(r[1:], params), EQ if r[0] == 0 else GE) for r in rows))
    cur.i = after_params

    nstmts = cur.int()
    raw_statements = []
    for _ in range(nstmts):
        nrel = cur.int()
        if nrel < 2:
            raise FormatError("a statement needs DOMAIN and SCATTERING relations", cur.i)
        _, dom_rows, d, _, _ = _read_relation(cur, "DOMAIN", n_params, in_dims=0)
        _, sc_rows, nsc, sc_in, sln = _read_relation(cur, "SCATTERING", n_params, in_dims=d)
        accesses = []
        for _ in range(nrel - 2):
            kind, arows, adims, _, aln = _read_relation(cur, (READ, WRITE), n_params, in_dims=d)
            accesses.append((kind, arows, adims, aln))
        cur.expect("1")
        cur.expect("<body>")
        sid_text, ln = cur.raw_after_label()
        n_it_text, _ = cur.raw_after_label()
        it_text, _ = cur.raw_after_label()
        tile_text, _ = cur.raw_after_label()
        body_text, bln = cur.raw_after_label()
        cur.expect("</body>")
        try:
            sid = int(sid_text)
            n_it = int(n_it_text)
            tiles = tuple(int(x) for x in tile_text.split())
        except ValueError:
            raise FormatError("bad statement extension", ln) from None
        iterators = it_text.split()
        if n_it != len(iterators) or n_it != d:
            raise DimensionMismatch(f"statement declares {n_it} iterators for {d} domain dims", ln)
        raw_statements.append((sid, iterators, dom_rows, sc_rows, nsc, sln, accesses,
                               tiles, body_text, bln))
    cur.expect("<arrays>")
    narr = cur.int()
    arrays = {}
    for _ in range(narr):
        line, ln = cur.next()
        parts = line.split()
        if len(parts) != 3:
            raise FormatError(f"bad array mapping {line!r}", ln)
        arrays[int(parts[0])] = (parts[1], int(parts[2]))
    cur.expect("</arrays>")
    cur.expect("</OpenScop>")

    statements = []
    for sid, iterators, dom_rows, sc_rows, nsc, sln, accesses, tiles, body_text, bln in raw_statements:
        cols = iterators + params
        domain = Polyhedron(tuple(cols), tuple(
            Constraint(_expr(r[1:], cols), EQ if r[0] == 0 else GE) for r in dom_rows))
        if len(sc_rows) != nsc:
            raise DimensionMismatch("scattering needs one row per output dimension", sln)
        schedule = []
        for k, r in enumerate(sc_rows):
            if r[0] != 0 or r[1 + k] != -1:
                raise FormatError("scattering rows must define one output dimension each", sln)
            schedule.append(_expr(r[1 + nsc:], cols))
        accs = []
        for kind, arows, adims, aln in accesses:
            arr_id = arows[0][-1]
            if arr_id not in arrays:
                raise FormatError(f"unknown array id {arr_id}", aln)
            name, rank = arrays[arr_id]
            if rank != adims - 1:
                raise DimensionMismatch(f"array {name} has rank {rank}, access has {adims - 1}", aln)
            subs = tuple(_expr(r[1 + adims:], cols) for r in arows[1:])
            accs.append(AccessRelation(name, subs, kind))
        body = parse_statement(body_text, dict(arrays.values()), cols)
        statements.append(ScopStatement(sid, tuple(iterators), domain, tuple(schedule),
                                        tuple(accs), body, tiles))
    return Scop(tuple(params), context, tuple(statements),
                tuple(sorted(arrays.values())))
