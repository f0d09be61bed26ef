"""Weighted-CNF reading/writing and the translation into PB form.

Both WCNF dialects are accepted: the current one (``h <lits> 0`` for hard
clauses, ``<weight> <lits> 0`` for soft ones) and the legacy header form
(``p wcnf <nvars> <nclauses> <top>`` where a weight >= top marks a hard
clause).  Output is always written in the current dialect.

The PB translation mirrors the cost semantics exactly: hard clauses become
clausal constraints, a unit soft (u, w) contributes w * ~u to the objective,
and every other soft clause C gets a fresh relaxer b with constraint
asPB(C v b) and objective term w * b.
"""

from . import pb

MAX_WEIGHT = 2**63 - 1


class WcnfInstance:

    def __init__(self, hard=None, soft=None):
        self.hard = hard if hard is not None else []
        self.soft = soft if soft is not None else []

    def max_var_index(self):
        m = 0
        for cl in self.hard:
            for lit in cl:
                m = max(m, pb.var_index(lit >> 1))
        for _, cl in self.soft:
            for lit in cl:
                m = max(m, pb.var_index(lit >> 1))
        return m

    def __eq__(self, other):
        return (isinstance(other, WcnfInstance)
                and self.hard == other.hard and self.soft == other.soft)


def _lit_from_dimacs(n):
    return pb.mklit(pb.mkvar(abs(n)), n < 0)


def _lit_to_dimacs(lit):
    v = lit >> 1
    if pb.var_ns(v) != pb.NS_USER:
        raise ValueError("only problem variables may appear in WCNF output")
    return -pb.var_index(v) if lit & 1 else pb.var_index(v)


def _parse_clause_lits(toks, lineno):
    if not toks or toks[-1] != "0":
        raise ValueError("line %d: clause not terminated by 0" % lineno)
    lits = []
    for t in toks[:-1]:
        try:
            n = int(t)
        except ValueError:
            raise ValueError("line %d: bad literal %r" % (lineno, t))
        if n == 0:
            raise ValueError("line %d: literal 0 inside clause" % lineno)
        lits.append(_lit_from_dimacs(n))
    return lits


def _parse_weight(tok, lineno):
    if not tok.isdigit():
        raise ValueError("line %d: bad weight %r" % (lineno, tok))
    w = int(tok)
    if w == 0:
        raise ValueError("line %d: zero-weight soft clause" % lineno)
    if w > MAX_WEIGHT:
        raise ValueError("line %d: weight exceeds 2^63-1" % lineno)
    return w


def parse_wcnf(text):
    inst = WcnfInstance()
    top = None
    saw_clause = False
    for lineno, line in enumerate(text.splitlines(), start=1):
        toks = line.split()
        if not toks or toks[0] == "c":
            continue
        if toks[0] == "p":
            if saw_clause or top is not None:
                raise ValueError("line %d: misplaced p-line" % lineno)
            if len(toks) != 5 or toks[1] != "wcnf":
                raise ValueError("line %d: bad p-line (want 'p wcnf "
                                 "<nvars> <nclauses> <top>')" % lineno)
            try:
                top = int(toks[4])
            except ValueError:
                raise ValueError("line %d: bad top weight" % lineno)
            if top < 1:
                raise ValueError("line %d: bad top weight" % lineno)
            continue
        saw_clause = True
        if toks[0] == "h":
            if top is not None:
                raise ValueError("line %d: 'h' clause in legacy format" % lineno)
            inst.hard.append(_parse_clause_lits(toks[1:], lineno))
            continue
        w = _parse_weight(toks[0], lineno)
        lits = _parse_clause_lits(toks[1:], lineno)
        if top is not None and w >= top:
            inst.hard.append(lits)
        else:
            inst.soft.append((w, lits))
    return inst


def write_wcnf(inst):
    lines = []
    for cl in inst.hard:
        lines.append(" ".join(["h"] + [str(_lit_to_dimacs(l)) for l in cl] + ["0"]))
    for w, cl in inst.soft:
        lines.append(" ".join([str(w)] + [str(_lit_to_dimacs(l)) for l in cl] + ["0"]))
    return "\n".join(lines) + ("\n" if lines else "")


def encode_to_pb(inst):
    """Translate to (constraints, objective, soft_info).

    soft_info maps constraint position -> (label_var, weight) for relaxed
    (non-unit) soft clauses; hard clauses and unit softs have no entry.
    Duplicate unit softs merge additively into the objective.
    """
    constraints = [pb.constraint_from_clause(cl) for cl in inst.hard]
    objective = pb.Objective()
    soft_info = {}
    next_aux = 1
    for w, cl in inst.soft:
        lits = []
        for lit in cl:
            if lit not in lits:
                lits.append(lit)
        if len(lits) == 1:
            objective.add_literal_term(w, pb.neg(lits[0]))
        else:
            label = pb.mkvar(next_aux, pb.NS_AUX)
            next_aux += 1
            soft_info[len(constraints)] = (label, w)
            constraints.append(pb.constraint_from_clause(lits + [pb.mklit(label)]))
            objective.add_literal_term(w, pb.mklit(label))
    return constraints, objective, soft_info


def cost(inst, assign):
    """Soft-weight cost of a total assignment, or None if a hard clause fails."""
    for cl in inst.hard:
        if not any(assign.get(l >> 1, 0) == (l & 1) ^ 1 for l in cl):
            return None
    total = 0
    for w, cl in inst.soft:
        if not any(assign.get(l >> 1, 0) == (l & 1) ^ 1 for l in cl):
            total += w
    return total


def opt_cost_bruteforce(inst, var_limit=22):
    """Exact optimum by enumeration over the variables that occur; None if
    no assignment satisfies the hard clauses."""
    vs = set()
    for cl in inst.hard:
        vs.update(l >> 1 for l in cl)
    for _, cl in inst.soft:
        vs.update(l >> 1 for l in cl)
    vs = sorted(vs, key=pb.var_sort_key)
    if len(vs) > var_limit:
        raise ValueError("too many variables for brute force (%d)" % len(vs))
    bit = {v: i for i, v in enumerate(vs)}

    def masks(cl):
        p = n = 0
        for lit in cl:
            if lit & 1:
                n |= 1 << bit[lit >> 1]
            else:
                p |= 1 << bit[lit >> 1]
        return p, n

    hards = [masks(cl) for cl in inst.hard]
    softs = [(w, masks(cl)) for w, cl in inst.soft]
    full = (1 << len(vs)) - 1
    best = None
    for m in range(1 << len(vs)):
        inv = full ^ m
        feasible = True
        for p, n in hards:
            if not (m & p) and not (inv & n):
                feasible = False
                break
        if not feasible:
            continue
        c = 0
        for w, (p, n) in softs:
            if not (m & p) and not (inv & n):
                c += w
        if best is None or c < best:
            best = c
    return best


def pb_opt_bruteforce(constraints, objective, var_limit=22):
    """Exact PB optimum by enumeration; None if the constraints are UNSAT."""
    vs = set()
    for c in constraints:
        vs.update(c.vars())
    vs.update(objective.coeffs)
    vs = sorted(vs, key=pb.var_sort_key)
    if len(vs) > var_limit:
        raise ValueError("too many variables for brute force (%d)" % len(vs))
    bit = {v: i for i, v in enumerate(vs)}
    cons = [([(coef, bit[lit >> 1], lit & 1) for coef, lit in c.terms], c.degree)
            for c in constraints]
    obj = [(coef, bit[v]) for v, coef in objective.coeffs.items()]
    best = None
    for m in range(1 << len(vs)):
        feasible = True
        for terms, degree in cons:
            tot = 0
            for coef, bt, sg in terms:
                if (m >> bt) & 1 != sg:
                    tot += coef
            if tot < degree:
                feasible = False
                break
        if not feasible:
            continue
        val = objective.constant
        for coef, bt in obj:
            if (m >> bt) & 1:
                val += coef
        if best is None or val < best:
            best = val
    return best
