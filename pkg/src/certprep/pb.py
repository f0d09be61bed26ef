"""Pseudo-Boolean core: literals, linear constraints, cutting-planes rules.

Variables and literals are plain ints.  A variable packs a 1-based index and a
namespace tag (``x`` for problem variables, ``_b`` for auxiliary variables
introduced along the way, ``_t`` for short-lived renaming temporaries); a
literal is the variable shifted left once with the negation flag in bit 0.
Keeping everything integral makes assignments and witnesses cheap dicts.

Constraints are kept in normalized form: distinct variables, positive
coefficients, non-negative degree, terms sorted by (namespace, index).
"""

NS_USER = 0
NS_AUX = 1
NS_TMP = 2

_NS_PREFIX = {NS_USER: "x", NS_AUX: "_b", NS_TMP: "_t"}


def mkvar(index, ns=NS_USER):
    return (index << 2) | ns


def var_index(v):
    return v >> 2


def var_ns(v):
    return v & 3


def mklit(v, negated=False):
    return (v << 1) | (1 if negated else 0)


def neg(lit):
    return lit ^ 1


def lit_var(lit):
    return lit >> 1


def var_sort_key(v):
    # problem variables first (by index), then _b, then _t
    return (v & 3, v >> 2)


def lit_sort_key(lit):
    return (lit >> 1 & 3, lit >> 3, lit & 1)


def fmt_var(v):
    return "%s%d" % (_NS_PREFIX[v & 3], v >> 2)


def fmt_lit(lit):
    return ("~" if lit & 1 else "") + fmt_var(lit >> 1)


def parse_lit(text):
    """Parse ``x3``, ``~x3``, ``_b2``, ``_t1`` ... into a literal int."""
    s = text
    negated = s.startswith("~")
    if negated:
        s = s[1:]
    if s.startswith("_b"):
        ns, body = NS_AUX, s[2:]
    elif s.startswith("_t"):
        ns, body = NS_TMP, s[2:]
    elif s.startswith("x"):
        ns, body = NS_USER, s[1:]
    else:
        raise ValueError("bad literal %r" % text)
    if not body.isdigit():
        raise ValueError("bad literal %r" % text)
    index = int(body)
    if index < 1:
        raise ValueError("bad literal %r" % text)
    return mklit(mkvar(index, ns), negated)


class LinearConstraint:
    """A normalized inequality  sum(coef * lit) >= degree."""

    __slots__ = ("terms", "degree")

    def __init__(self, terms, degree):
        self.terms = terms
        self.degree = degree

    def __eq__(self, other):
        return (isinstance(other, LinearConstraint)
                and self.terms == other.terms and self.degree == other.degree)

    def __hash__(self):
        return hash((self.terms, self.degree))

    def __repr__(self):
        return "<%s>" % fmt_constraint(self)

    def is_trivial(self):
        return self.degree == 0

    def vars(self):
        return [lit >> 1 for _, lit in self.terms]

    def slack(self, assign):
        """Coefficient sum of non-falsified literals minus the degree."""
        s = -self.degree
        for coef, lit in self.terms:
            if assign.get(lit >> 1) != (lit & 1):
                s += coef
        return s

    def satisfied_by(self, assign):
        """True under a total assignment (missing variables count as 0)."""
        total = 0
        for coef, lit in self.terms:
            if assign.get(lit >> 1, 0) == (lit & 1) ^ 1:
                total += coef
        return total >= self.degree


def normalize(raw_terms, degree):
    """Build a LinearConstraint from possibly signed, unsorted, repeated terms.

    Negated literals are rewritten through ~x = 1 - x, coefficients on the
    same variable are merged, zero coefficients dropped, and a negative
    degree clamped to 0 (the constraint is then trivially true).
    """
    acc = {}
    deg = degree
    for coef, lit in raw_terms:
        v = lit >> 1
        if lit & 1:
            acc[v] = acc.get(v, 0) - coef
            deg -= coef
        else:
            acc[v] = acc.get(v, 0) + coef
    terms = []
    for v in sorted(acc, key=var_sort_key):
        c = acc[v]
        if c > 0:
            terms.append((c, v << 1))
        elif c < 0:
            terms.append((-c, (v << 1) | 1))
            deg -= c
    if deg < 0:
        deg = 0
    return LinearConstraint(tuple(terms), deg)


def constraint_from_clause(lits):
    """Clause -> PB: one coefficient-1 term per *distinct* literal, degree 1."""
    seen = []
    for lit in lits:
        if lit not in seen:
            seen.append(lit)
    return normalize([(1, lit) for lit in seen], 1)


def literal_axiom(lit):
    # lit >= 0, trivially true; only ever a transient pol operand
    return LinearConstraint(((1, lit),), 0)


def negate(c):
    """Integer negation: not(sum a*l >= b)  <=>  sum a*~l >= sum(a) - b + 1."""
    total = sum(coef for coef, _ in c.terms)
    return normalize([(coef, lit ^ 1) for coef, lit in c.terms],
                     total - c.degree + 1)


def add(c1, c2):
    return normalize(list(c1.terms) + list(c2.terms), c1.degree + c2.degree)


def multiply(c, k):
    if k < 1:
        raise ValueError("multiplier must be positive")
    return LinearConstraint(tuple((coef * k, lit) for coef, lit in c.terms),
                            c.degree * k)


def divide(c, k):
    if k < 1:
        raise ValueError("divisor must be positive")
    return LinearConstraint(
        tuple((-(-coef // k), lit) for coef, lit in c.terms),
        -(-c.degree // k))


def saturate(c):
    d = c.degree
    return LinearConstraint(
        tuple((min(coef, d), lit) for coef, lit in c.terms if min(coef, d)),
        d)


def restrict(c, witness):
    """Apply a substitution {var: 0 | 1 | literal} to a constraint."""
    raw = []
    deg = c.degree
    for coef, lit in c.terms:
        img = witness.get(lit >> 1)
        if img is None:
            raw.append((coef, lit))
        elif img == 0 or img == 1:
            if img ^ (lit & 1):  # literal became true
                deg -= coef
        else:
            raw.append((coef, img ^ 1 if lit & 1 else img))
    return normalize(raw, deg)


class Objective:
    """Linear objective in canonical variable form: sum(coef * var) + constant.

    Coefficients may be negative (a weight w on ~x contributes -w*x + w).
    """

    __slots__ = ("coeffs", "constant")

    def __init__(self, coeffs=None, constant=0):
        self.coeffs = dict(coeffs) if coeffs else {}
        self.constant = constant

    def __eq__(self, other):
        return (isinstance(other, Objective)
                and self.coeffs == other.coeffs
                and self.constant == other.constant)

    def __repr__(self):
        return "<obj %s>" % fmt_objective(self)

    def copy(self):
        return Objective(self.coeffs, self.constant)

    def add_literal_term(self, weight, lit):
        """Add weight*lit (weight may be negative, lit may be negated)."""
        v = lit >> 1
        if lit & 1:
            self.coeffs[v] = self.coeffs.get(v, 0) - weight
            self.constant += weight
        else:
            self.coeffs[v] = self.coeffs.get(v, 0) + weight
        if self.coeffs[v] == 0:
            del self.coeffs[v]

    def coef(self, v):
        return self.coeffs.get(v, 0)

    def vars(self):
        return set(self.coeffs)

    def value(self, assign):
        total = self.constant
        for v, coef in self.coeffs.items():
            if assign.get(v, 0):
                total += coef
        return total

    def restrict(self, witness):
        out = Objective(constant=self.constant)
        for v, coef in self.coeffs.items():
            img = witness.get(v)
            if img is None:
                out.add_literal_term(coef, v << 1)
            elif img == 1:
                out.constant += coef
            elif img != 0:
                out.add_literal_term(coef, img)
        return out

    def literal_form(self):
        """Split into ((weight, lit), ...) with positive weights, plus constant.

        A negative coefficient c on x reads as |c| * ~x shifted by c.
        """
        terms = []
        const = self.constant
        for v in sorted(self.coeffs, key=var_sort_key):
            c = self.coeffs[v]
            if c > 0:
                terms.append((c, v << 1))
            else:
                terms.append((-c, (v << 1) | 1))
                const += c
        return tuple(terms), const


def objective_diff_constraint(a, b):
    """The constraint  a - b >= 0  for two objectives (constants included)."""
    raw = [(coef, v << 1) for v, coef in a.coeffs.items()]
    raw += [(-coef, v << 1) for v, coef in b.coeffs.items()]
    return normalize(raw, b.constant - a.constant)


def unit_propagate(constraints, assign=None):
    """Propagate to fixpoint; return the extended assignment or None on conflict.

    A constraint with slack < 0 is conflicting; an unassigned literal whose
    coefficient exceeds the slack must be true.  Iterating in rounds is
    confluent, so the result does not depend on constraint order.
    """
    assign = dict(assign) if assign else {}
    cs = constraints if isinstance(constraints, list) else list(constraints)
    changed = True
    while changed:
        changed = False
        for c in cs:
            slack = -c.degree
            pending = None
            for coef, lit in c.terms:
                val = assign.get(lit >> 1)
                if val is None:
                    slack += coef
                    if pending is None:
                        pending = [(coef, lit)]
                    else:
                        pending.append((coef, lit))
                elif val != (lit & 1):
                    slack += coef
            if slack < 0:
                return None
            if pending:
                for coef, lit in pending:
                    if coef > slack:
                        assign[lit >> 1] = (lit & 1) ^ 1
                        changed = True
    return assign


def rup_check(premises, target, assign=None):
    """Reverse unit propagation: premises plus not(target) propagate to conflict."""
    cs = list(premises)
    cs.append(negate(target))
    return unit_propagate(cs, assign) is None


# ---------------------------------------------------------------------------
# text form


def fmt_constraint(c):
    parts = ["%+d %s" % (coef, fmt_lit(lit)) for coef, lit in c.terms]
    parts.append(">= %d" % c.degree)
    return " ".join(parts)


def fmt_objective(obj):
    terms, const = obj.literal_form()
    parts = ["%+d %s" % (w, fmt_lit(lit)) for w, lit in terms]
    if const or not parts:
        parts.append("%+d" % const)
    return " ".join(parts)


def fmt_witness(witness):
    parts = []
    for v in sorted(witness, key=var_sort_key):
        img = witness[v]
        txt = str(img) if img in (0, 1) else fmt_lit(img)
        parts.append("%s -> %s" % (fmt_var(v), txt))
    return " ".join(parts)


def _parse_int(tok):
    t = tok[1:] if tok[0] in "+-" else tok
    if not t.isdigit():
        raise ValueError("expected integer, got %r" % tok)
    return int(tok)


def parse_constraint_tokens(toks, pos=0):
    """Parse ``[+|-]coef lit ... >= degree`` starting at toks[pos].

    Returns (constraint, next position).  The result is normalized, so signed
    coefficients and repeated variables in the text are accepted.
    """
    raw = []
    n = len(toks)
    while pos < n and toks[pos] != ">=":
        if pos + 1 >= n:
            raise ValueError("truncated constraint")
        coef = _parse_int(toks[pos])
        lit = parse_lit(toks[pos + 1])
        raw.append((coef, lit))
        pos += 2
    if pos >= n:
        raise ValueError("constraint missing '>='")
    pos += 1
    if pos >= n:
        raise ValueError("constraint missing degree")
    degree = _parse_int(toks[pos])
    return normalize(raw, degree), pos + 1


def parse_signed_terms(toks, pos=0):
    """Parse ``[+|-]w lit ... [+|-]const`` (obju payload) up to end or ';'.

    Returns (list of (weight, lit), constant, next position).
    """
    terms = []
    const = 0
    n = len(toks)
    while pos < n and toks[pos] != ";":
        w = _parse_int(toks[pos])
        if pos + 1 < n and toks[pos + 1] != ";":
            try:
                lit = parse_lit(toks[pos + 1])
            except ValueError:
                const += w
                pos += 1
                continue
            terms.append((w, lit))
            pos += 2
        else:
            const += w
            pos += 1
    return terms, const, pos


def parse_witness_tokens(toks, pos=0):
    """Parse ``var -> {0|1|lit} ...`` up to end or ';'; returns (dict, next pos)."""
    witness = {}
    n = len(toks)
    while pos < n and toks[pos] != ";":
        if pos + 2 >= n or toks[pos + 1] != "->":
            raise ValueError("bad witness near %r" % toks[pos])
        v = parse_lit(toks[pos])
        if v & 1:
            raise ValueError("witness domain must be variables: %r" % toks[pos])
        v >>= 1
        img_tok = toks[pos + 2]
        if img_tok == "0":
            img = 0
        elif img_tok == "1":
            img = 1
        else:
            img = parse_lit(img_tok)
        witness[v] = img
        pos += 3
    return witness, pos
