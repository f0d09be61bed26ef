"""Certified WCNF simplification pipeline.

The preprocessor rewrites a weighted-CNF instance while logging, step by
step, a proof that the rewrite preserves the optimal cost.  It works in five
stages: encode the instance into PB form, simplify the clause-level view
(units, duplicates, tautologies, subsumption, blocked clauses), switch to
the clause+objective view, run the objective-aware techniques, and finally
fold the accumulated objective constant into a fresh variable and rename
everything back into plain problem variables.

Invariant kept throughout: between technique applications the live clause
map of this module equals, as PB constraints, the core set of the emitted
proof, and ``self.objective`` equals the proof objective.  Every deletion
recipe below was chosen so that the checker can discharge its obligations
with unit propagation alone; the comments on the trickier ones record which
live constraint closes each obligation.
"""

import io

from . import pb
from .pb import (LinearConstraint, Objective, constraint_from_clause,
                 mklit, mkvar, neg)
from .sat import OracleBudget, SatOracle
from .wcnf import MAX_WEIGHT, WcnfInstance, encode_to_pb
from .writer import ProofWriter

STAGE2_ORDER = ("dup", "taut", "up", "empty", "sub", "bce")
STAGE4_ORDER = ("up", "sub", "ssr", "fle", "impl", "eql", "sle", "gsle",
                "bve", "bva", "am1", "bcr", "lm", "sbl", "trim", "harden")

# bva, sbl, trim and harden are opt-in: they are sound but tend to grow or
# reshape instances in ways the default schedule should not.
DEFAULT_TECHNIQUES = ("dup", "taut", "up", "empty", "sub", "bce",
                      "ssr", "fle", "impl", "eql", "sle", "gsle",
                      "bve", "am1", "bcr", "lm")


class Config:
    """Technique selection and resource knobs for a pipeline run."""

    def __init__(self, techniques=DEFAULT_TECHNIQUES, rounds=5, bve_growth=0,
                 seed=0, oracle_conflicts=20000, bce_softs=False,
                 max_proof_lines=None, checkpoints=False):
        names = set(techniques)
        unknown = names - set(STAGE2_ORDER) - set(STAGE4_ORDER)
        if unknown:
            raise ValueError("unknown technique(s): %s" % ", ".join(sorted(unknown)))
        if rounds < 1:
            raise ValueError("rounds must be >= 1")
        if bve_growth < 0:
            raise ValueError("bve growth bound must be >= 0")
        self.stage2 = tuple(n for n in STAGE2_ORDER if n in names)
        self.stage4 = tuple(n for n in STAGE4_ORDER if n in names)
        self.rounds = rounds
        self.bve_growth = bve_growth
        self.seed = seed
        self.oracle_conflicts = oracle_conflicts
        self.bce_softs = bce_softs
        self.max_proof_lines = max_proof_lines
        self.checkpoints = checkpoints

    @classmethod
    def from_flag(cls, text, **kw):
        """Build from a comma-separated technique list ('' = none)."""
        names = tuple(t for t in text.split(",") if t)
        return cls(techniques=names, **kw)


def _unit(lit):
    return constraint_from_clause([lit])


class Infeasible(Exception):
    """The proof derived 0 >= 1; carries the conflicting constraint id."""

    def __init__(self, cid):
        super().__init__("hard clauses are unsatisfiable")
        self.cid = cid


class Preprocessor:
    """One pipeline run over a single instance.

    With ``sink=None`` no proof text is produced (id bookkeeping only);
    pass a file-like sink to stream the proof.
    """

    def __init__(self, instance, config=None, sink=None):
        self.cfg = config if config is not None else Config()
        self.writer = ProofWriter(sink)
        cons, objective, soft_info = encode_to_pb(instance)
        self.writer.begin(len(cons))
        self.objective = objective
        self.clauses = {}       # cid -> LinearConstraint, mirrors the proof core
        self.occ = {}           # literal -> set of cids
        self.soft_label = {}    # cid -> (label var, weight), WCNF phase only
        self.hard_ids = set()
        self.core_live = set(range(1, len(cons) + 1))
        for pos, c in enumerate(cons):
            cid = pos + 1
            self._install(cid, c)
            if pos in soft_info:
                self.soft_label[cid] = soft_info[pos]
            else:
                self.hard_ids.add(cid)
        self.next_aux = len(soft_info) + 1
        self.next_tmp = 1
        self.phase = "wcnf"
        self.counts = {}
        self.cap_hit = False
        self.checkpoints = []
        self.input_instance = WcnfInstance(
            [list(c) for c in instance.hard],
            [(w, list(c)) for w, c in instance.soft])
        self.dirty = False

    # ------------------------------------------------------------------
    # bookkeeping

    def _install(self, cid, c):
        self.clauses[cid] = c
        for _, lit in c.terms:
            self.occ.setdefault(lit, set()).add(cid)

    def _uninstall(self, cid):
        c = self.clauses.pop(cid)
        for _, lit in c.terms:
            self.occ[lit].discard(cid)
        return c

    def _lits(self, cid):
        return tuple(lit for _, lit in self.clauses[cid].terms)

    def _occ_ids(self, lit):
        return self.occ.get(lit, frozenset())

    def _fresh_label(self):
        v = mkvar(self.next_aux, pb.NS_AUX)
        self.next_aux += 1
        return v

    def _fresh_tmp(self):
        v = mkvar(self.next_tmp, pb.NS_TMP)
        self.next_tmp += 1
        return v

    def _count(self, name):
        self.counts[name] = self.counts.get(name, 0) + 1
        if self.cfg.checkpoints:
            snap = tuple(sorted(self.clauses.values(),
                                key=lambda c: (c.degree, c.terms)))
            self.checkpoints.append((name, self.writer.lines_written,
                                     snap, self.objective.copy()))

    # ------------------------------------------------------------------
    # proof emission, keeping core_live in sync with the checker

    def _core_rup(self, c):
        cid = self.writer.rup(c)
        self.writer.core_ids([cid])
        self.core_live.add(cid)
        return cid

    def _core_red(self, c, witness):
        cid = self.writer.red(c, witness)
        self.writer.core_ids([cid])
        self.core_live.add(cid)
        return cid

    def _core_pol(self, tokens):
        cid = self.writer.pol(tokens)
        self.writer.core_ids([cid])
        self.core_live.add(cid)
        return cid

    def _delc(self, cid, witness=None):
        self.writer.delc(cid, witness)
        self.core_live.discard(cid)
        self.dirty = True

    def _set_objective(self, new):
        """Emit the objective delta and adopt `new` as the tracked objective."""
        terms = []
        for v in sorted(set(self.objective.coeffs) | set(new.coeffs),
                        key=pb.var_sort_key):
            d = new.coef(v) - self.objective.coef(v)
            if d:
                terms.append((d, mklit(v)))
        const = new.constant - self.objective.constant
        if terms or const:
            self.writer.obju_diff(terms, const)
            self.dirty = True
        self.objective = new

    # ------------------------------------------------------------------
    # the generic fixing procedure

    def fix_literal(self, lit, pid):
        """Propagate a literal pinned true by core constraint `pid` (lit >= 1).

        Emits the objective update, shrinks every clause containing ~lit,
        drops every other clause containing lit, retires satisfied soft
        labels, and finally deletes `pid` itself with the witness {var->val}.
        Returns the ids of newly created unit clauses.
        """
        v = lit >> 1
        val = 0 if lit & 1 else 1
        if self.objective.coef(v):
            self._set_objective(self.objective.restrict({v: val}))
        units = []
        for cid in sorted(self._occ_ids(neg(lit))):
            c = self._uninstall(cid)
            new = pb.add(c, _unit(lit))
            nid = self._core_pol([cid, pid, "+"])
            self._delc(cid)
            if not new.terms and new.degree:
                raise Infeasible(nid)
            self._install(nid, new)
            if cid in self.soft_label:
                self.soft_label[nid] = self.soft_label.pop(cid)
            else:
                self.hard_ids.discard(cid)
                self.hard_ids.add(nid)
                if len(new.terms) == 1 and new.degree == 1:
                    units.append(nid)
        for cid in sorted(self._occ_ids(lit)):
            if cid == pid:
                continue
            self._uninstall(cid)
            self._delc(cid)
            self.hard_ids.discard(cid)
            if cid in self.soft_label:
                label, w = self.soft_label.pop(cid)
                self._retire_soft_label(label, w)
        self._delc(pid, {v: val})
        if pid in self.clauses:
            self._uninstall(pid)
            self.hard_ids.discard(pid)
        return units

    def _retire_soft_label(self, label, weight):
        # the label no longer occurs in any clause; drop its objective term
        hb = self._core_red(_unit(mklit(label, True)), {label: 0})
        self._set_objective(self.objective.restrict({label: 0}))
        self._delc(hb, {label: 0})

    # ------------------------------------------------------------------
    # stage 2: clause-level simplification (WCNF phase)

    def propagate_hard_units(self):
        queue = [cid for cid in sorted(self.clauses) if self._is_hard_unit(cid)]
        changed = False
        while queue:
            pid = queue.pop(0)
            if pid not in self.clauses or not self._is_hard_unit(pid):
                continue
            changed = True
            self._count("up")
            queue.extend(self.fix_literal(self._lits(pid)[0], pid))
        return changed

    def _is_hard_unit(self, cid):
        c = self.clauses[cid]
        if len(c.terms) != 1 or c.degree != 1:
            return False
        return self.phase == "oc" or cid in self.hard_ids

    def remove_duplicates(self):
        changed = False
        while self._duplicates_once():
            changed = True
        return changed

    def _duplicates_once(self):
        groups = {}
        for cid in sorted(self.clauses):
            if self.clauses[cid].is_trivial():
                continue
            groups.setdefault(self._real_lits(cid), []).append(cid)
        for key in sorted(groups, key=lambda k: groups[k][0]):
            cids = groups[key]
            hards = [c for c in cids if c in self.hard_ids]
            softs = [c for c in cids if c in self.soft_label]
            if len(hards) > 1:
                for cid in hards[1:]:
                    self._uninstall(cid)
                    self._delc(cid)
                    self.hard_ids.discard(cid)
                    self._count("dup")
                return True
            if hards and softs:
                for cid in softs:
                    label, w = self.soft_label.pop(cid)
                    self._uninstall(cid)
                    self._delc(cid)
                    self._retire_soft_label(label, w)
                    self._count("dup")
                return True
            if len(key) == 1 and softs:
                # a soft shrunk to a single literal duplicates another soft
                # (relaxed or already objective-level): merge through the
                # objective by converting it early
                if len(softs) > 1 or self._unit_penalized(key[0]):
                    self._sync_unit_soft(softs[0])
                    self._count("dup")
                    return True
            if len(softs) > 1:
                keep = softs[0]
                for cid in softs[1:]:
                    if self._merge_soft_pair(keep, cid):
                        self._count("dup")
                        return True
        return False

    def _unit_penalized(self, u):
        """True if the objective pays for falsifying the unit soft (u)."""
        terms, _ = self.objective.literal_form()
        return any(lit == neg(u) for _, lit in terms)

    def _real_lits(self, cid):
        lits = self._lits(cid)
        if cid in self.soft_label:
            label = self.soft_label[cid][0]
            lits = tuple(l for l in lits if l >> 1 != label)
        return lits

    def _merge_soft_pair(self, keep, dup):
        bc, wc = self.soft_label[keep]
        bd, wd = self.soft_label[dup]
        if wc + wd > MAX_WEIGHT:
            return False
        # transfer the duplicate's weight onto the kept label, then drop it
        e1 = self._core_red(constraint_from_clause(
            [mklit(bc, True), mklit(bd)]), {bc: 0, bd: 0})
        e2 = self._core_red(constraint_from_clause(
            [mklit(bd, True), mklit(bc)]), {bc: 0, bd: 0})
        o2 = self.objective.copy()
        o2.add_literal_term(wd, mklit(bc))
        o2.add_literal_term(-wd, mklit(bd))
        self._set_objective(o2)
        self._uninstall(dup)
        self._delc(dup)            # RUP through the kept clause and e1
        del self.soft_label[dup]
        self._delc(e1, {bd: 1})
        self._delc(e2, {bd: 0})
        self.soft_label[keep] = (bc, wc + wd)
        return True

    def remove_tautologies(self):
        changed = False
        for cid in sorted(self.clauses):
            if not self.clauses[cid].is_trivial():
                continue
            self._uninstall(cid)
            self._delc(cid)        # negation of a trivial constraint conflicts
            if cid in self.soft_label:
                label, w = self.soft_label.pop(cid)
                self._retire_soft_label(label, w)
            self.hard_ids.discard(cid)
            self._count("taut")
            changed = True
        return changed

    def remove_empty_softs(self):
        changed = False
        for cid in sorted(self.clauses):
            if cid not in self.soft_label:
                continue
            c = self.clauses[cid]
            label, w = self.soft_label[cid]
            if c.degree != 1 or self._real_lits(cid):
                continue
            # nothing left but the relaxer: the weight is paid forever
            self._set_objective(self.objective.restrict({label: 1}))
            del self.soft_label[cid]
            self._uninstall(cid)
            self._delc(cid, {label: 1})
            self._count("empty")
            changed = True
        return changed

    def eliminate_subsumed(self):
        changed = False
        while self._subsumed_once():
            changed = True
        return changed

    def _subsumed_once(self):
        subsumers = (sorted(self.hard_ids & set(self.clauses))
                     if self.phase == "wcnf" else sorted(self.clauses))
        for cid in subsumers:
            lits = self._lits(cid)
            if not lits or self.clauses[cid].is_trivial():
                continue
            rare = min(lits, key=lambda l: (len(self._occ_ids(l)), l))
            for did in sorted(self._occ_ids(rare)):
                if did == cid or did not in self.clauses:
                    continue
                if not set(lits) <= set(self._real_lits(did)):
                    continue
                if len(self._lits(did)) <= len(lits) and did < cid:
                    continue   # identical clause: keep the earlier copy
                self._uninstall(did)
                self._delc(did)
                self.hard_ids.discard(did)
                if did in self.soft_label:
                    label, w = self.soft_label.pop(did)
                    self._retire_soft_label(label, w)
                self._count("sub")
                return True
        return False

    def eliminate_blocked_clauses(self):
        changed = False
        while self._blocked_once():
            changed = True
        return changed

    def _blocked_once(self):
        for cid in sorted(self.clauses):
            if cid not in self.hard_ids:
                if not (self.cfg.bce_softs and cid in self.soft_label):
                    continue
            if self.clauses[cid].is_trivial():
                continue
            for lit in self._real_lits(cid):
                if self._blocked_on(cid, lit):
                    self._delete_blocked(cid, lit)
                    self._count("bce")
                    return True
        return False

    def _blocked_on(self, cid, lit):
        if self.objective.coef(lit >> 1):
            return False
        mine = set(self._lits(cid)) - {lit}
        for kid in self._occ_ids(neg(lit)):
            if kid == cid:
                return False
            other = set(self._lits(kid)) - {neg(lit)}
            if not any(neg(u) in other for u in mine):
                return False
        return True

    def _delete_blocked(self, cid, lit):
        self._uninstall(cid)
        self._delc(cid, {lit >> 1: 0 if lit & 1 else 1})
        self.hard_ids.discard(cid)
        if cid in self.soft_label:
            label, w = self.soft_label.pop(cid)
            self._retire_soft_label(label, w)

    # ------------------------------------------------------------------
    # stage 3: switch to the clause+objective view

    def convert_to_objective_centric(self):
        """Sync relaxed softs that shrank to unit clauses, then drop the
        hard/soft distinction (labels live on in the objective)."""
        for cid in sorted(list(self.soft_label)):
            c = self.clauses.get(cid)
            if c is not None and c.degree == 1 and len(c.terms) == 2:
                self._sync_unit_soft(cid)
        self.hard_ids = set(self.clauses)
        self.soft_label = {}
        self.phase = "oc"

    def _sync_unit_soft(self, cid):
        """Replace a relaxed unit soft (u v b) by the objective term w*~u."""
        label, w = self.soft_label.pop(cid)
        u = self._real_lits(cid)[0]
        helper = self._core_red(constraint_from_clause(
            [neg(u), mklit(label, True)]), {label: 0})
        o2 = self.objective.copy()
        o2.add_literal_term(w, neg(u))
        o2.add_literal_term(-w, mklit(label))
        self._set_objective(o2)
        self._delc(helper, {label: 0})
        self._uninstall(cid)
        self._delc(cid, {label: 1})

    # ------------------------------------------------------------------
    # clause-level unit propagation helper (for FLE and friends)

    def _up_closure(self, start):
        """Clause-level UP from the given literals.

        Returns (set of true literals, conflict flag).
        """
        val = {}
        for lit in start:
            want = (lit & 1) ^ 1
            if val.get(lit >> 1, want) != want:
                return set(), True
            val[lit >> 1] = want
        changed = True
        while changed:
            changed = False
            for cid in sorted(self.clauses):
                c = self.clauses[cid]
                if c.is_trivial():
                    continue
                pending = []
                satisfied = False
                for _, lit in c.terms:
                    have = val.get(lit >> 1)
                    if have is None:
                        pending.append(lit)
                    elif have == (lit & 1) ^ 1:
                        satisfied = True
                        break
                if satisfied:
                    continue
                if not pending:
                    return set(), True
                if len(pending) == 1:
                    lit = pending[0]
                    val[lit >> 1] = (lit & 1) ^ 1
                    changed = True
        return {mklit(v, b == 0) for v, b in val.items()}, False

    # ------------------------------------------------------------------
    # stage 4 techniques (objective-centric phase)

    def self_subsuming_resolution(self):
        changed = False
        while self._ssr_once():
            changed = True
        return changed

    def _ssr_once(self):
        for did in sorted(self.clauses):
            dlits = self._lits(did)
            if len(dlits) < 2:
                continue
            for m in dlits:
                if self.objective.coef(m >> 1):
                    continue
                rest = set(dlits) - {m}
                for cid in sorted(self._occ_ids(neg(m))):
                    if cid == did:
                        continue
                    if set(self._lits(cid)) - {neg(m)} <= rest:
                        c = constraint_from_clause(sorted(rest))
                        nid = self._core_rup(c)
                        self._install(nid, c)
                        self._uninstall(did)
                        self._delc(did)
                        self._count("ssr")
                        return True
        return False

    def failed_literal_elimination(self):
        changed = False
        while self._fle_once():
            changed = True
        return changed

    def _fle_candidates(self):
        for lit in sorted(self.occ, key=pb.lit_sort_key):
            if not self.occ[lit]:
                continue
            # fixing lit=0 must not pay anything: ~lit may not be a paid term
            coef = self.objective.coef(lit >> 1)
            if (coef < 0) if lit & 1 == 0 else (coef > 0):
                continue
            yield lit

    def _fle_once(self):
        for lit in self._fle_candidates():
            closure, conflict = self._up_closure([lit])
            if conflict:
                pid = self._core_rup(_unit(neg(lit)))
                self.fix_literal(neg(lit), pid)
                self._count("fle")
                return True
            if all(any(l2 != lit and l2 in closure for l2 in self._lits(cid))
                   for cid in self._occ_ids(lit)):
                pid = self._core_red(_unit(neg(lit)),
                                     {lit >> 1: 1 if lit & 1 else 0})
                self.fix_literal(neg(lit), pid)
                self._count("fle")
                return True
        return False

    def implied_literal_detection(self):
        changed = False
        while self._impl_once():
            changed = True
        return changed

    def _impl_once(self):
        lits = sorted((l for l in self.occ if self.occ[l]), key=pb.lit_sort_key)
        for l1 in lits:
            pos, cpos = self._up_closure([l1])
            if cpos:
                continue
            neg_cl, cneg = self._up_closure([neg(l1)])
            if not cneg:
                for l2 in sorted(pos & neg_cl, key=pb.lit_sort_key):
                    if l2 >> 1 == l1 >> 1:
                        continue
                    self._fix_implied(l1, l2, witnessed=False)
                    return True
            # extension: one-sided implication with flippable ~l2 clauses
            for l2 in sorted(pos, key=pb.lit_sort_key):
                if l2 >> 1 == l1 >> 1:
                    continue
                if self.objective.coef(l1 >> 1) or self.objective.coef(l2 >> 1):
                    continue
                if not self._occ_ids(neg(l2)):
                    continue
                if all(any(l3 != neg(l2) and l3 in neg_cl
                           for l3 in self._lits(cid))
                       for cid in self._occ_ids(neg(l2))):
                    self._fix_implied(l1, l2, witnessed=True)
                    return True
        return False

    def _fix_implied(self, l1, l2, witnessed):
        if witnessed:
            h1 = self._core_red(constraint_from_clause([l1, l2]),
                                {l2 >> 1: 0 if l2 & 1 else 1})
        else:
            h1 = self._core_rup(constraint_from_clause([l1, l2]))
        h2 = self._core_rup(constraint_from_clause([neg(l1), l2]))
        pid = self._core_pol([h1, h2, "+", 2, "d"])
        self._delc(h1)
        self._delc(h2)
        self.fix_literal(l2, pid)
        self._count("impl")

    def equivalent_literal_substitution(self):
        changed = False
        while self._eql_once():
            changed = True
        return changed

    def _eql_once(self):
        lits = sorted((l for l in self.occ if self.occ[l]), key=pb.lit_sort_key)
        for l1 in lits:
            pos, cpos = self._up_closure([l1])
            if cpos:
                continue
            neg_cl, cneg = self._up_closure([neg(l1)])
            for l2 in sorted(pos, key=pb.lit_sort_key):
                if l2 >> 1 == l1 >> 1:
                    continue
                if not cneg and neg(l2) in neg_cl:
                    self._substitute_equivalent(l1, l2, witnessed=False)
                    return True
                if cneg:
                    continue
                if self.objective.coef(l1 >> 1) or self.objective.coef(l2 >> 1):
                    continue
                if all(any(l3 != l2 and l3 in neg_cl for l3 in self._lits(cid))
                       for cid in self._occ_ids(l2)):
                    self._substitute_equivalent(l1, l2, witnessed=True)
                    return True
        return False

    def _substitute_equivalent(self, l1, l2, witnessed):
        e1 = self._core_rup(constraint_from_clause([neg(l1), l2]))
        if witnessed:
            e2 = self._core_red(constraint_from_clause([l1, neg(l2)]),
                                {l2 >> 1: 1 if l2 & 1 else 0})
        else:
            e2 = self._core_rup(constraint_from_clause([l1, neg(l2)]))
        image = l2 if l1 & 1 == 0 else neg(l2)     # positive var(l1) maps here
        for cid in sorted(self._occ_ids(l1) | self._occ_ids(neg(l1))):
            old = self._lits(cid)
            newlits = [l2 if l == l1 else (neg(l2) if l == neg(l1) else l)
                       for l in old]
            replacement = constraint_from_clause(newlits)
            if not replacement.is_trivial():
                nid = self._core_rup(replacement)
                self._install(nid, replacement)
            self._uninstall(cid)
            self._delc(cid)
        if self.objective.coef(l1 >> 1):
            self._set_objective(self.objective.restrict({l1 >> 1: image}))
        self._delc(e1, {l1 >> 1: image})
        self._delc(e2, {l1 >> 1: image})
        self._count("eql")

    def subsumed_literal_elimination(self):
        changed = False
        while self._sle_once():
            changed = True
        return changed

    def _sle_pairs(self):
        vs = sorted({l >> 1 for l in self.occ if self.occ[l]},
                    key=pb.var_sort_key)
        for x in vs:
            for y in vs:
                if x != y:
                    yield x, y

    def _sle_once(self):
        for x, y in self._sle_pairs():
            cx, cy = self.objective.coef(x), self.objective.coef(y)
            if cx < 0 or cy < 0 or (cx > 0) != (cy > 0):
                continue
            posy = self._occ_ids(mklit(y))
            negx = self._occ_ids(mklit(x, True))
            if not posy and not negx:
                continue
            if not posy <= self._occ_ids(mklit(x)):
                continue
            if not negx <= self._occ_ids(mklit(y, True)):
                continue
            if cx == 0:
                px = self._core_red(_unit(mklit(x)), {x: 1, y: 0})
                py = self._core_red(_unit(mklit(y, True)), {x: 1, y: 0})
                self.fix_literal(mklit(x), px)
                self.fix_literal(mklit(y, True), py)
            else:
                if cx > cy:
                    continue
                py = self._core_red(_unit(mklit(y, True)), {y: 0, x: 1})
                self.fix_literal(mklit(y, True), py)
            self._count("sle")
            return True
        return False

    def group_sle(self):
        changed = False
        while self._gsle_once():
            changed = True
        return changed

    def _gsle_once(self):
        for b in sorted(self.objective.coeffs, key=pb.var_sort_key):
            cb = self.objective.coef(b)
            if cb <= 0 or self._occ_ids(mklit(b, True)):
                continue
            cids = self._occ_ids(mklit(b))
            if not cids:
                continue
            group = set()
            ok = True
            for cid in sorted(cids):
                best = None
                for _, lit in self.clauses[cid].terms:
                    v = lit >> 1
                    if v == b or lit & 1:
                        continue
                    cv = self.objective.coef(v)
                    if cv <= 0 or self._occ_ids(mklit(v, True)):
                        continue
                    if best is None or (cv, pb.var_sort_key(v)) < best[0]:
                        best = ((cv, pb.var_sort_key(v)), v)
                if best is None:
                    ok = False
                    break
                group.add(best[1])
            if not ok or not group:
                continue
            if cb < sum(self.objective.coef(v) for v in group):
                continue
            witness = {b: 0}
            witness.update({v: 1 for v in group})
            pid = self._core_red(_unit(mklit(b, True)), witness)
            self.fix_literal(mklit(b, True), pid)
            self._count("gsle")
            return True
        return False

    def eliminate_variable_bve(self, v):
        """Resolve out variable v (must not carry an objective coefficient)."""
        pos = sorted(self._occ_ids(mklit(v)))
        negs = sorted(self._occ_ids(mklit(v, True)))
        for i in pos:
            for j in negs:
                lits = [l for l in self._lits(i) + self._lits(j)
                        if l >> 1 != v]
                resolvent = constraint_from_clause(lits)
                if resolvent.is_trivial():
                    continue
                raw = pb.add(self.clauses[i], self.clauses[j])
                tokens = [min(i, j), max(i, j), "+"]
                if any(coef > 1 for coef, _ in raw.terms):
                    tokens.append("s")
                nid = self._core_pol(tokens)
                if not resolvent.terms:
                    raise Infeasible(nid)
                self._install(nid, resolvent)
                self.hard_ids.add(nid)
        for cid in pos + negs:
            self._uninstall(cid)
            self.hard_ids.discard(cid)
            self.soft_label.pop(cid, None)
        for cid in sorted(pos + negs):
            self._delc(cid, {v: 1 if cid in pos else 0})

    def _pass_bve(self):
        changed = False
        while self._bve_once():
            changed = True
        return changed

    def _bve_once(self):
        for v in sorted({l >> 1 for l in self.occ if self.occ[l]},
                        key=pb.var_sort_key):
            if self.objective.coef(v):
                continue
            pos = self._occ_ids(mklit(v))
            negs = self._occ_ids(mklit(v, True))
            if not pos or not negs:
                continue
            count = 0
            for i in pos:
                for j in negs:
                    lits = [l for l in self._lits(i) + self._lits(j)
                            if l >> 1 != v]
                    if not constraint_from_clause(lits).is_trivial():
                        count += 1
            if count > len(pos) + len(negs) + self.cfg.bve_growth:
                continue
            self.eliminate_variable_bve(v)
            self._count("bve")
            return True
        return False

    def add_variables_bva(self, m_lits, suffixes):
        """Factor the clauses {l v D : l in m_lits, D in suffixes} through a
        fresh variable."""
        originals = []
        for l in m_lits:
            for d in suffixes:
                originals.append(self._find_clause(tuple(sorted(set(d) | {l},
                                                  key=pb.lit_sort_key))))
        x = self._fresh_label()
        for d in sorted(suffixes):
            c = constraint_from_clause(list(d) + [mklit(x, True)])
            cid = self._core_red(c, {x: 0})
            self._install(cid, c)
        for l in sorted(m_lits, key=pb.lit_sort_key):
            c = constraint_from_clause([l, mklit(x)])
            cid = self._core_red(c, {x: 1})
            self._install(cid, c)
        for cid in sorted(originals):
            self._uninstall(cid)
            self._delc(cid)

    def _find_clause(self, lits):
        want = set(lits)
        for cid in sorted(self._occ_ids(next(iter(want)))):
            if set(self._lits(cid)) == want:
                return cid
        raise KeyError("no live clause %r" % (sorted(want),))

    def _pass_bva(self):
        changed = False
        while self._bva_once():
            changed = True
        return changed

    def _bva_once(self):
        by_clause = {}
        for cid in sorted(self.clauses):
            by_clause.setdefault(frozenset(self._lits(cid)), cid)
        lits = sorted((l for l in self.occ if self.occ[l]), key=pb.lit_sort_key)
        for i, l1 in enumerate(lits):
            for l2 in lits[i + 1:]:
                if l2 >> 1 == l1 >> 1:
                    continue
                suffixes = []
                for cid in sorted(self._occ_ids(l1)):
                    d = frozenset(self._lits(cid)) - {l1}
                    if d and l2 not in d and neg(l2) not in d \
                            and (d | {l2}) in by_clause:
                        suffixes.append(tuple(sorted(d, key=pb.lit_sort_key)))
                # replacing 2|S| clauses by |S|+2 must be a strict win
                if len(suffixes) + 2 < 2 * len(suffixes):
                    self.add_variables_bva([l1, l2], suffixes)
                    self._count("bva")
                    return True
        return False

    def intrinsic_at_most_ones(self, bc, bd, bin_cid):
        """Reify the at-most-one over two labels linked by (bc v bd)."""
        w = self.objective.coef(bc)
        bcd = self._fresh_label()
        d1 = self.writer.red(pb.normalize(
            [(2, mklit(bcd, True)), (1, mklit(bc)), (1, mklit(bd))], 2),
            {bcd: 0})
        clause = constraint_from_clause([mklit(bc, True), mklit(bd, True),
                                         mklit(bcd)])
        d2 = self.writer.red(clause, {bcd: 1})
        elim = self._core_pol([d1, bin_cid, "+", 2, "d"])
        self.writer.core_ids([d2])
        self.core_live.add(d2)
        o2 = self.objective.copy()
        o2.add_literal_term(-w, mklit(bc))
        o2.add_literal_term(-w, mklit(bd))
        o2.add_literal_term(w, mklit(bcd))
        o2.constant += w
        self._set_objective(o2)
        self.writer.delc(d1)
        self._delc(elim, {bcd: 0})
        self._install(d2, clause)
        return bcd, d2

    def _am1_eligible(self, bin_cid):
        lits = self._lits(bin_cid)
        if len(lits) != 2 or any(l & 1 for l in lits):
            return None
        bc, bd = lits[0] >> 1, lits[1] >> 1
        w = self.objective.coef(bc)
        if w <= 0 or self.objective.coef(bd) != w:
            return None
        if w + self.objective.constant > MAX_WEIGHT:
            return None
        if self._occ_ids(mklit(bc, True)) or self._occ_ids(mklit(bd, True)):
            return None
        return bc, bd

    def _pass_am1(self):
        changed = False
        while self._am1_once():
            changed = True
        return changed

    def _am1_once(self):
        skip_bcr = "bcr" in self.cfg.stage4
        for cid in sorted(self.clauses):
            pair = self._am1_eligible(cid)
            if pair is None:
                continue
            if skip_bcr and self._bcr_eligible(cid, *pair):
                continue
            self.intrinsic_at_most_ones(pair[0], pair[1], cid)
            self._count("am1")
            return True
        return False

    def _bcr_eligible(self, bin_cid, bc, bd):
        if (self._occ_ids(mklit(bc)) & self._occ_ids(mklit(bd))) != {bin_cid}:
            return False
        sides_c = sorted(self._occ_ids(mklit(bc)) - {bin_cid})
        sides_d = sorted(self._occ_ids(mklit(bd)) - {bin_cid})
        produced = 0
        for i in sides_c:
            ci = set(self._lits(i)) - {mklit(bc)}
            for j in sides_d:
                dj = set(self._lits(j)) - {mklit(bd)}
                if not any(neg(u) in dj for u in ci):
                    produced += 1
        return produced <= len(sides_c) + len(sides_d) + 1

    def binary_core_removal(self, bc, bd, bin_cid):
        bcd, _ = self.intrinsic_at_most_ones(bc, bd, bin_cid)
        self.eliminate_variable_bve(bc)
        self.eliminate_variable_bve(bd)
        return bcd

    def _pass_bcr(self):
        changed = False
        while self._bcr_once():
            changed = True
        return changed

    def _bcr_once(self):
        for cid in sorted(self.clauses):
            pair = self._am1_eligible(cid)
            if pair is None or not self._bcr_eligible(cid, *pair):
                continue
            self.binary_core_removal(pair[0], pair[1], cid)
            self._count("bcr")
            return True
        return False

    def label_matching(self, cid_c, cid_d, x_lit, bc=None, bd=None):
        """Merge two equal-weight labels whose clauses clash on var(x_lit).

        `cid_c` must contain neg(x_lit) and `cid_d` x_lit; each label may
        occur nowhere else.  The recipe derives the at-most-one over the two
        labels from the clash, reifies their disjunction into a fresh label,
        transfers the weight, and rewrites both clauses.
        """
        if bc is None:
            bc = next(l >> 1 for l in self._lits(cid_c)
                      if self.objective.coef(l >> 1) > 0
                      and self._occ_ids(mklit(l >> 1)) == {cid_c})
        if bd is None:
            bd = next(l >> 1 for l in self._lits(cid_d)
                      if self.objective.coef(l >> 1) > 0
                      and self._occ_ids(mklit(l >> 1)) == {cid_d})
        w = self.objective.coef(bc)
        if self.objective.coef(bd) != w:
            raise ValueError("label weights differ")
        c_lits = [l for l in self._lits(cid_c) if l >> 1 != bc]
        d_lits = [l for l in self._lits(cid_d) if l >> 1 != bd]
        bcd = self._fresh_label()
        am1c = self.writer.red(constraint_from_clause(
            [mklit(bc, True), mklit(bd, True)]), {bc: x_lit, bd: neg(x_lit)})
        r1 = self._core_red(constraint_from_clause(
            [mklit(bcd, True), mklit(bc), mklit(bd)]), {bcd: 0})
        r2 = self.writer.red(pb.normalize(
            [(2, mklit(bcd)), (1, mklit(bc, True)), (1, mklit(bd, True))], 2),
            {bcd: 1})
        merged = self._core_pol([r2, am1c, "+", 2, "d"])
        o2 = self.objective.copy()
        o2.add_literal_term(-w, mklit(bc))
        o2.add_literal_term(-w, mklit(bd))
        o2.add_literal_term(w, mklit(bcd))
        self._set_objective(o2)
        kc = constraint_from_clause(c_lits + [mklit(bcd)])
        kd = constraint_from_clause(d_lits + [mklit(bcd)])
        kc_id = self._core_rup(kc)
        self._install(kc_id, kc)
        kd_id = self._core_rup(kd)
        self._install(kd_id, kd)
        self._delc(merged, {bc: 0, bd: 0})
        self.writer.delc(am1c)
        self._uninstall(cid_c)
        self._delc(cid_c, {bc: 1})
        self._uninstall(cid_d)
        self._delc(cid_d, {bd: 1})
        self.writer.delc(r2)
        self._delc(r1, {bc: 1})
        return bcd

    def _pass_lm(self):
        changed = False
        while self._lm_once():
            changed = True
        return changed

    def _lm_once(self):
        singles = {}
        for v in sorted(self.objective.coeffs, key=pb.var_sort_key):
            if self.objective.coef(v) <= 0 or self._occ_ids(mklit(v, True)):
                continue
            ids = self._occ_ids(mklit(v))
            if len(ids) == 1:
                singles[v] = next(iter(ids))
        for bc in sorted(singles, key=pb.var_sort_key):
            for bd in sorted(singles, key=pb.var_sort_key):
                if bc == bd or singles[bc] == singles[bd]:
                    continue
                if self.objective.coef(bc) != self.objective.coef(bd):
                    continue
                cid_c, cid_d = singles[bc], singles[bd]
                c_lits = set(self._real_oc_lits(cid_c, bc))
                d_lits = set(self._real_oc_lits(cid_d, bd))
                for u in sorted(c_lits, key=pb.lit_sort_key):
                    if neg(u) in d_lits:
                        self.label_matching(cid_c, cid_d, neg(u), bc, bd)
                        self._count("lm")
                        return True
        return False

    def _real_oc_lits(self, cid, label):
        return [l for l in self._lits(cid) if l >> 1 != label]

    def structure_based_labelling(self, cid, b, lit):
        """Weaken a clause blocked under b=1 into clause-or-b."""
        c = constraint_from_clause(list(self._lits(cid)) + [mklit(b)])
        nid = self._core_rup(c)
        self._install(nid, c)
        self._uninstall(cid)
        self._delc(cid, {lit >> 1: 0 if lit & 1 else 1})

    def _pass_sbl(self):
        changed = False
        while self._sbl_once():
            changed = True
        return changed

    def _sbl_once(self):
        obj_vars = [v for v in sorted(self.objective.coeffs,
                                      key=pb.var_sort_key)
                    if self.objective.coef(v) > 0]
        for cid in sorted(self.clauses):
            lits = self._lits(cid)
            for b in obj_vars:
                if b in {l >> 1 for l in lits}:
                    continue
                for lit in lits:
                    if self.objective.coef(lit >> 1):
                        continue
                    if self._blocked_under(cid, lit, b):
                        self.structure_based_labelling(cid, b, lit)
                        self._count("sbl")
                        return True
        return False

    def _blocked_under(self, cid, lit, b):
        mine = set(self._lits(cid)) - {lit}
        for kid in self._occ_ids(neg(lit)):
            if kid == cid:
                return False
            klits = set(self._lits(kid))
            if mklit(b) in klits:
                continue            # satisfied once b=1
            other = (klits - {neg(lit), mklit(b, True)})
            if not any(neg(u) in other for u in mine):
                return False
        return True

    def trim_maxsat(self, candidates=None):
        """Fix objective literals that a SAT oracle proves entailed false."""
        if candidates is None:
            candidates = [lit for _, lit in self.objective.literal_form()[0]]
        derived = []
        oracle = SatOracle(
            on_learn=lambda lits: derived.append(
                self.writer.rup(constraint_from_clause(lits))),
            conflict_budget=self.cfg.oracle_conflicts)
        for cid in sorted(self.clauses):
            if not self.clauses[cid].is_trivial():
                oracle.add_clause(self._lits(cid))
        alive = list(candidates)
        entailed = []
        m = len(alive)
        try:
            while alive:
                m = max(1, min(m, len(alive)))
                subset = alive[:m]
                s = self._fresh_label()
                sel = [mklit(s, True)] + subset
                derived.append(self.writer.red(constraint_from_clause(sel),
                                               {s: 0}))
                oracle.add_clause(sel)
                model = oracle.solve([mklit(s)])
                if model is None:
                    entailed.extend(subset)
                    alive = alive[m:]
                    m = max(1, m // 2)
                else:
                    alive = [l for l in alive
                             if model.get(l >> 1, 0) != (l & 1) ^ 1]
            for lit in entailed:
                if oracle.solve([lit]) is not None:
                    raise AssertionError("oracle model despite entailment")
        except OracleBudget:
            for cid in derived:
                self.writer.delc(cid)
            return False
        pids = [(lit, self._core_rup(_unit(neg(lit))))
                for lit in entailed]
        for cid in derived:
            self.writer.delc(cid)
        for lit, pid in pids:
            self.fix_literal(neg(lit), pid)
            self._count("trim")
        return bool(pids)

    def hardening(self):
        """Fix objective literals whose cost exceeds a known solution's."""
        oracle = SatOracle(conflict_budget=self.cfg.oracle_conflicts)
        for cid in sorted(self.clauses):
            if not self.clauses[cid].is_trivial():
                oracle.add_clause(self._lits(cid))
        try:
            model = oracle.solve()
        except OracleBudget:
            return False
        if model is None:
            return False
        for v in self.objective.coeffs:
            if v not in model:
                model[v] = self.objective.coef(v) < 0
        bound = self.objective.value(model)
        changed = False
        while True:
            terms, _ = self.objective.literal_form()
            picked = None
            for w, lit in terms:
                if w > bound:
                    picked = lit
                    break
            if picked is None:
                return changed
            witness = {v: 1 if b else 0 for v, b in model.items()}
            pid = self._core_red(_unit(neg(picked)), witness)
            self.fix_literal(neg(picked), pid)
            self._count("harden")
            changed = True

    # ------------------------------------------------------------------
    # stage 5 and output

    def remove_objective_constant(self):
        terms, const = self.objective.literal_form()
        if const == 0:
            return
        if const < 0:
            raise AssertionError("objective constant went negative")
        bw = self._fresh_label()
        pid = self._core_red(_unit(mklit(bw)), {bw: 1})
        self._install(pid, _unit(mklit(bw)))
        self.hard_ids.add(pid)
        o2 = self.objective.copy()
        o2.add_literal_term(const, mklit(bw))
        o2.constant -= const
        self._set_objective(o2)
        self._count("const")

    def rename_variables(self):
        """Map every surviving internal variable to a fresh problem index.

        Problem variables keep their index; internal ones get the next free
        indices in order of first occurrence (clauses first, objective last),
        each moved through a throwaway middle name so chains cannot clash.
        """
        order = []
        seen = set()
        for cid in sorted(self.clauses):
            for lit in self._lits(cid):
                if lit >> 1 not in seen:
                    seen.add(lit >> 1)
                    order.append(lit >> 1)
        for _, lit in self.objective.literal_form()[0]:
            if lit >> 1 not in seen:
                seen.add(lit >> 1)
                order.append(lit >> 1)
        internal = [v for v in order if pb.var_ns(v) != pb.NS_USER]
        if not internal:
            return
        base = max((pb.var_index(v) for v in order
                    if pb.var_ns(v) == pb.NS_USER), default=0)
        finals = [mkvar(base + i + 1) for i in range(len(internal))]
        temps = [self._fresh_tmp() for _ in internal]
        for old, tmp in zip(internal, temps):
            self._substitute_var(old, tmp)
        for tmp, new in zip(temps, finals):
            self._substitute_var(tmp, new)

    def _substitute_var(self, old, new):
        """Rename `old` to the fresh, unused variable `new`."""
        ol, nl = mklit(old), mklit(new)
        e1 = self._core_red(constraint_from_clause([neg(ol), nl]), {new: 1})
        e2 = self._core_red(constraint_from_clause([ol, neg(nl)]), {new: 0})
        for cid in sorted(self._occ_ids(ol) | self._occ_ids(neg(ol))):
            lits = [nl if l == ol else (neg(nl) if l == neg(ol) else l)
                    for l in self._lits(cid)]
            c = constraint_from_clause(lits)
            nid = self._core_rup(c)
            self._install(nid, c)
            self.hard_ids.add(nid)
            self._uninstall(cid)
            self._delc(cid)
            self.hard_ids.discard(cid)
        if self.objective.coef(old):
            self._set_objective(self.objective.restrict({old: nl}))
        self._delc(e1, {old: nl})
        self._delc(e2, {old: nl})

    def _drop_trivial(self):
        for cid in sorted(self.clauses):
            if self.clauses[cid].is_trivial():
                self._uninstall(cid)
                self._delc(cid)
                self.hard_ids.discard(cid)

    def finish(self):
        """Close out a feasible run: sync, fold the constant, rename, emit."""
        if self.phase == "wcnf":
            if not self.dirty:
                self.writer.conclude("EQUIOPTIMAL")
                return self.input_instance
            if self._pristine_softs():
                return self._finish_wcnf()
            self.convert_to_objective_centric()
        self._drop_trivial()
        self.remove_objective_constant()
        self.rename_variables()
        terms, const = self.objective.literal_form()
        if const:
            raise AssertionError("objective constant survived stage 5")
        hard = [list(self._lits(cid)) for cid in sorted(self.clauses)]
        soft = [(w, [neg(lit)]) for w, lit in terms]
        self.writer.conclude("EQUIOPTIMAL")
        return WcnfInstance(hard, soft)

    def _pristine_softs(self):
        """True when the relaxed softs can be written back verbatim: their
        labels are exactly the positional ones re-encoding the output would
        assign, and no other internal variable survives anywhere."""
        pairs = sorted(self.soft_label.items())
        labels = set()
        for k, (cid, (label, w)) in enumerate(pairs):
            if pb.var_ns(label) != pb.NS_AUX or pb.var_index(label) != k + 1:
                return False
            if self.objective.coef(label) != w:
                return False
            if self.clauses[cid].is_trivial():
                return False
            if len(self._real_lits(cid)) == 1:
                return False   # re-encoding would treat it as a unit soft
            labels.add(label)
        terms, const = self.objective.literal_form()
        if const:
            return False
        for w, lit in terms:
            v = lit >> 1
            if v in labels:
                if lit & 1:
                    return False
            elif pb.var_ns(v) != pb.NS_USER:
                return False
        for cid in self.clauses:
            for l in self._lits(cid):
                if pb.var_ns(l >> 1) != pb.NS_USER and l >> 1 not in labels:
                    return False
        return True

    def _finish_wcnf(self):
        for cid in sorted(self.clauses):
            if self.clauses[cid].is_trivial():
                self._uninstall(cid)
                self._delc(cid)
                self.hard_ids.discard(cid)
        hard = [list(self._lits(cid))
                for cid in sorted(self.hard_ids & set(self.clauses))]
        soft = [(w, list(self._real_lits(cid)))
                for cid, (label, w) in sorted(self.soft_label.items())]
        labels = {label for label, _ in self.soft_label.values()}
        terms, _ = self.objective.literal_form()
        soft.extend((w, [neg(lit)]) for w, lit in terms
                    if lit >> 1 not in labels)
        self.writer.conclude("EQUIOPTIMAL")
        return WcnfInstance(hard, soft)

    def finalize_infeasible(self, conflict_cid):
        """The core holds 0 >= 1: reduce everything to the empty clause."""
        for cid in sorted(self.core_live - {conflict_cid}):
            self._delc(cid)
        self.clauses = {}
        self.occ = {}
        self.soft_label = {}
        self.hard_ids = set()
        if self.objective.coeffs or self.objective.constant:
            self.writer.obju_new([], 0)
            self.objective = Objective()
        self.writer.conclude("EQUIOPTIMAL")
        return WcnfInstance([[]], [])

    # ------------------------------------------------------------------
    # the full pipeline

    _STAGE2 = {
        "dup": remove_duplicates,
        "taut": remove_tautologies,
        "up": propagate_hard_units,
        "empty": remove_empty_softs,
        "sub": eliminate_subsumed,
        "bce": eliminate_blocked_clauses,
    }
    _STAGE4 = {
        "up": propagate_hard_units,
        "sub": eliminate_subsumed,
        "ssr": self_subsuming_resolution,
        "fle": failed_literal_elimination,
        "impl": implied_literal_detection,
        "eql": equivalent_literal_substitution,
        "sle": subsumed_literal_elimination,
        "gsle": group_sle,
        "bve": _pass_bve,
        "bva": _pass_bva,
        "am1": _pass_am1,
        "bcr": _pass_bcr,
        "lm": _pass_lm,
        "sbl": _pass_sbl,
        "trim": trim_maxsat,
        "harden": hardening,
    }

    def _run_stage(self, names, table):
        for _ in range(self.cfg.rounds):
            changed = False
            for name in names:
                changed |= bool(table[name](self))
                if self._line_budget_hit():
                    self.cap_hit = True
                    return
            if not changed:
                return
        self.cap_hit = True

    def _line_budget_hit(self):
        cap = self.cfg.max_proof_lines
        return cap is not None and self.writer.lines_written >= cap

    def _initial_conflict(self):
        for cid in sorted(self.clauses):
            c = self.clauses[cid]
            if not c.terms and c.degree:
                return cid
        return None

    def run(self):
        conflict = self._initial_conflict()
        if conflict is None:
            try:
                self.writer.comment("clause-level simplification")
                self._run_stage(self.cfg.stage2, self._STAGE2)
                if self.cfg.stage4:
                    self.convert_to_objective_centric()
                    self.writer.comment("objective-centric simplification")
                    self._run_stage(self.cfg.stage4, self._STAGE4)
            except Infeasible as exc:
                conflict = exc.cid
        if conflict is not None:
            return self.finalize_infeasible(conflict)
        self.writer.comment("constant removal and renaming")
        return self.finish()


def run(instance, config=None, sink=None):
    """Run the pipeline; returns (output instance, proof text, Preprocessor).

    With an explicit sink the proof is streamed there and the returned text
    is None.
    """
    own = sink is None
    if own:
        sink = io.StringIO()
    p = Preprocessor(instance, config, sink)
    out = p.run()
    return out, (sink.getvalue() if own else None), p
