"""Streaming checker for pseudo-Boolean reformulation proofs.

A proof certifies that a reformulated instance relates to the original one at
a claimed strength (equioptimal / equisatisfiable / derivable).  The checker
replays the proof line by line against the PB translation of the original
instance, maintaining:

  * a map id -> live constraint, split into *core* (the current trusted
    reformulation) and *derived* (redundant helpers),
  * the current objective,
  * an occurrence index var -> ids used to enumerate witness obligations.

Step forms (one per line; ``*`` starts a comment, blank lines are skipped)::

    pseudo-Boolean proof version 2.0
    f <n>
    pol <rpn>              reverse-Polish cutting planes; tokens are
                           constraint ids, literals (axioms l >= 0), bare
                           integers, and + * d s.  * and d take the integer
                           from the top of the stack.
    rup <constraint> ;     addition by reverse unit propagation
    red <constraint> ; <witness> [; begin ... end]
                           addition by redundance with a substitution witness
    delc <id> [; <witness>]
                           checked deletion (unconditional for derived ids)
    obju diff <terms> ;    objective update (relative / absolute form)
    obju new <terms> ;
    core id <id> ...       move derived constraints into the core
    output <LEVEL>
    conclusion NONE
    end pseudo-Boolean proof

Additions get consecutive ids continuing after the input constraints; only
pol/rup/red consume ids.  A ``red ... ; begin`` block may spell out stubborn
obligations in sections ``goal <id|obj|self>`` containing pol/rup lines; the
block is closed by a bare ``end``.
"""

from . import pb

LEVELS = ("EQUIOPTIMAL", "EQUISATISFIABLE", "DERIVABLE")

HEADER = "pseudo-Boolean proof version 2.0"
TRAILER = "end pseudo-Boolean proof"


class ProofRejected(Exception):

    def __init__(self, lineno, message):
        super().__init__("line %d: %s" % (lineno, message))
        self.lineno = lineno
        self.message = message


class Verdict:

    def __init__(self, accepted, level=None, error=None, lineno=None):
        self.accepted = accepted
        self.level = level
        self.error = error
        self.lineno = lineno

    def __repr__(self):
        if self.accepted:
            return "<Verdict accepted %s>" % self.level
        return "<Verdict rejected: %s>" % self.error


class ProofChecker:

    def __init__(self, input_constraints, input_objective,
                 output_constraints=None, output_objective=None):
        self.input_constraints = list(input_constraints)
        self.input_objective = input_objective
        self.output_constraints = output_constraints
        self.output_objective = output_objective
        self.lineno = 0
        self.state = "header"
        self.constraints = {}
        self.core_ids = set()
        self.objective = None
        self.next_id = 1
        self.level = None
        self._occ = {}
        self._block = None  # (constraint, witness, collected lines) during red..begin

    # -- bookkeeping ---------------------------------------------------------

    def _err(self, msg):
        raise ProofRejected(self.lineno, msg)

    def _install(self, c, core=False):
        cid = self.next_id
        self.next_id += 1
        self.constraints[cid] = c
        if core:
            self.core_ids.add(cid)
        for v in c.vars():
            self._occ.setdefault(v, set()).add(cid)
        return cid

    def _remove(self, cid):
        c = self.constraints.pop(cid)
        self.core_ids.discard(cid)
        for v in c.vars():
            self._occ[v].discard(cid)

    def _live(self, cid):
        c = self.constraints.get(cid)
        if c is None:
            self._err("constraint %d is not live" % cid)
        return c

    def _live_list(self, skip=None):
        if skip is None:
            return list(self.constraints.values())
        return [c for i, c in self.constraints.items() if i != skip]

    def _core_list(self):
        return [self.constraints[i] for i in self.core_ids]

    # -- cutting planes ------------------------------------------------------

    def _eval_pol(self, toks, lookup):
        stack = []
        for t in toks:
            if t == "+":
                second = self._pop_constraint(stack, lookup)
                first = self._pop_constraint(stack, lookup)
                stack.append(pb.add(first, second))
            elif t == "*":
                k = self._pop_factor(stack)
                stack.append(pb.multiply(self._pop_constraint(stack, lookup), k))
            elif t == "d":
                k = self._pop_factor(stack)
                stack.append(pb.divide(self._pop_constraint(stack, lookup), k))
            elif t == "s":
                stack.append(pb.saturate(self._pop_constraint(stack, lookup)))
            elif t.isdigit():
                stack.append(int(t))
            else:
                stack.append(pb.literal_axiom(pb.parse_lit(t)))
        if len(stack) != 1:
            self._err("pol leaves %d items on the stack" % len(stack))
        return self._as_constraint(stack[0], lookup)

    def _pop_factor(self, stack):
        if not stack or not isinstance(stack[-1], int):
            self._err("pol: * and d need an integer on top of the stack")
        k = stack.pop()
        if k < 1:
            self._err("pol: factor must be positive")
        return k

    def _pop_constraint(self, stack, lookup):
        if not stack:
            self._err("pol: stack underflow")
        return self._as_constraint(stack.pop(), lookup)

    def _as_constraint(self, item, lookup):
        if isinstance(item, int):
            c = lookup(item)
            if c is None:
                self._err("constraint %d is not live" % item)
            return c
        return item

    # -- redundance obligations -----------------------------------------------

    def _touched_ids(self, witness, skip=None):
        ids = set()
        for v in witness:
            ids |= self._occ.get(v, set())
        ids.discard(skip)
        return ids

    def _discharge(self, premises, base, target, block, label):
        """Vacuous, implicit-RUP, or spelled-out subproof for one obligation."""
        if target.is_trivial():
            return True
        if base is None:  # premises already propagate to conflict
            return True
        if pb.unit_propagate(premises + [pb.negate(target)], base) is None:
            return True
        steps = (block or {}).get(label)
        if steps is None:
            return False
        return self._replay_goal(premises, base, target, steps)

    def _replay_goal(self, premises, base, target, steps):
        scratch = []
        locals_ = {}
        next_local = self.next_id

        def lookup(cid):
            if cid in locals_:
                return locals_[cid]
            return self.constraints.get(cid)

        for kind, payload in steps:
            if kind == "pol":
                c = self._eval_pol(payload, lookup)
            else:  # rup
                c = payload
                if pb.unit_propagate(premises + scratch + [pb.negate(c)],
                                     base) is not None:
                    self._err("subproof rup step failed")
            scratch.append(c)
            locals_[next_local] = c
            next_local += 1
        if any(c == target for c in scratch):
            return True
        return pb.unit_propagate(premises + scratch + [pb.negate(target)],
                                 base) is None

    def _check_witnessed(self, c, witness, block, skip=None):
        """Obligations for adding c by redundance (skip=None) or for deleting
        core constraint `skip` (then c is the removed constraint)."""
        premises = self._live_list(skip) + [pb.negate(c)]
        base = pb.unit_propagate(premises)
        for cid in sorted(self._touched_ids(witness, skip)):
            target = pb.restrict(self.constraints[cid], witness)
            if not self._discharge(premises, base, target, block, str(cid)):
                self._err("witness obligation fails for constraint %d" % cid)
        self_target = pb.restrict(c, witness)
        if not self._discharge(premises, base, self_target, block, "self"):
            self._err("witness obligation fails for the introduced constraint")
        if set(witness) & set(self.objective.coeffs):
            diff = pb.objective_diff_constraint(
                self.objective, self.objective.restrict(witness))
            if not self._discharge(premises, base, diff, block, "obj"):
                self._err("witness obligation fails for the objective")

    # -- objective updates -----------------------------------------------------

    def _obju_direction_ok(self, target):
        if target.is_trivial():
            return True
        core = self._core_list()
        if pb.rup_check(core, target):
            return True
        if target.terms:
            # scaled copy of a single core constraint (multiplication rule)
            v = target.terms[0][1] >> 1
            for cid in self._occ.get(v, set()):
                if cid not in self.core_ids:
                    continue
                g = self.constraints[cid]
                if not g.terms or len(g.terms) != len(target.terms):
                    continue
                a0, t0 = g.terms[0][0], target.terms[0][0]
                if t0 % a0:
                    continue
                k = t0 // a0
                if k >= 1 and pb.multiply(g, k) == target:
                    return True
        return False

    def _apply_obju(self, new_obj):
        for target in (pb.objective_diff_constraint(self.objective, new_obj),
                       pb.objective_diff_constraint(new_obj, self.objective)):
            if not self._obju_direction_ok(target):
                self._err("objective update is not justified by the core")
        self.objective = new_obj

    # -- output section ---------------------------------------------------------

    def _check_output(self, level):
        if level not in LEVELS:
            self._err("unknown output level %r" % level)
        self.level = level
        if self.output_constraints is None:
            return  # no reformulated instance to compare against
        out = set(self.output_constraints)
        if level == "DERIVABLE":
            live = set(self.constraints.values())
            if not out <= live:
                self._err("output constraint not among derived constraints")
            return
        core = {self.constraints[i] for i in self.core_ids}
        if core != out:
            self._err("core does not match the output instance")
        if level == "EQUIOPTIMAL":
            if self.objective != self.output_objective:
                self._err("objective does not match the output instance")

    # -- step dispatch ------------------------------------------------------------

    def feed(self, line):
        self.lineno += 1
        try:
            self._feed(line)
        except ProofRejected:
            raise
        except ValueError as exc:
            raise ProofRejected(self.lineno, str(exc))

    def _feed(self, line):
        toks = line.split()
        if not toks or toks[0] == "*":
            return
        if self._block is not None:
            self._collect_block_line(toks)
            return
        if self.state == "header":
            if line.strip() != HEADER:
                self._err("missing proof header")
            self.state = "preamble"
            return
        if self.state == "preamble":
            if toks[0] != "f" or len(toks) != 2 or not toks[1].isdigit():
                self._err("expected 'f <n>' after the header")
            n = int(toks[1])
            if n != len(self.input_constraints):
                self._err("f %d does not match the %d input constraints"
                          % (n, len(self.input_constraints)))
            for c in self.input_constraints:
                self._install(c, core=True)
            self.objective = self.input_objective.copy()
            self.state = "body"
            return
        if self.state == "body":
            self._body_step(toks)
            return
        if self.state == "post_output":
            if toks != ["conclusion", "NONE"]:
                self._err("expected 'conclusion NONE'")
            self.state = "post_conclusion"
            return
        if self.state == "post_conclusion":
            if toks != TRAILER.split():
                self._err("expected '%s'" % TRAILER)
            self.state = "done"
            return
        self._err("content after the proof trailer")

    def _body_step(self, toks):
        op = toks[0]
        if op == "pol":
            c = self._eval_pol(toks[1:], self.constraints.get)
            self._install(c)
        elif op == "rup":
            c, pos = pb.parse_constraint_tokens(toks, 1)
            self._expect_semi(toks, pos)
            if not pb.rup_check(self._live_list(), c):
                self._err("rup addition fails")
            self._install(c)
        elif op == "red":
            c, pos = pb.parse_constraint_tokens(toks, 1)
            if pos >= len(toks) or toks[pos] != ";":
                self._err("red: missing witness")
            witness, pos = pb.parse_witness_tokens(toks, pos + 1)
            if pos < len(toks):
                if toks[pos:] != [";", "begin"]:
                    self._err("red: malformed trailer")
                self._block = (c, witness, [])
                return
            self._check_witnessed(c, witness, None)
            self._install(c)
        elif op == "delc":
            if len(toks) < 2 or not toks[1].isdigit():
                self._err("delc needs a constraint id")
            cid = int(toks[1])
            c = self._live(cid)
            if cid in self.core_ids:
                if len(toks) > 2:
                    if toks[2] != ";":
                        self._err("delc: malformed witness")
                    witness, pos = pb.parse_witness_tokens(toks, 3)
                    if pos != len(toks):
                        self._err("delc: trailing tokens")
                    self._check_witnessed(c, witness, None, skip=cid)
                elif not pb.rup_check(self._live_list(skip=cid), c):
                    self._err("deleted core constraint is not rederivable")
            self._remove(cid)
        elif op == "obju":
            if len(toks) < 2 or toks[1] not in ("diff", "new"):
                self._err("obju needs 'diff' or 'new'")
            terms, const, pos = pb.parse_signed_terms(toks, 2)
            if pos < len(toks) and toks[pos] == ";":
                pos += 1
            if pos != len(toks):
                self._err("obju: trailing tokens")
            if toks[1] == "diff":
                new_obj = self.objective.copy()
                new_obj.constant += const
            else:
                new_obj = pb.Objective(constant=const)
            for w, lit in terms:
                new_obj.add_literal_term(w, lit)
            self._apply_obju(new_obj)
        elif op == "core":
            if len(toks) < 3 or toks[1] != "id":
                self._err("expected 'core id <id> ...'")
            for t in toks[2:]:
                if not t.isdigit():
                    self._err("bad constraint id %r" % t)
                self._live(int(t))
                self.core_ids.add(int(t))
        elif op == "output":
            if len(toks) != 2:
                self._err("expected 'output <level>'")
            self._check_output(toks[1])
            self.state = "post_output"
        else:
            self._err("unknown step %r" % op)

    def _expect_semi(self, toks, pos):
        if toks[pos:] != [";"]:
            self._err("expected ';' terminator")

    # -- red subproof blocks -------------------------------------------------------

    def _collect_block_line(self, toks):
        if toks == ["end"]:
            c, witness, lines = self._block
            self._block = None
            block = self._parse_block(lines)
            self._check_witnessed(c, witness, block)
            self._install(c)
            return
        if toks[0] not in ("goal", "pol", "rup"):
            self._err("unexpected %r inside a subproof block" % toks[0])
        self._block[2].append(toks)

    def _parse_block(self, lines):
        block = {}
        current = None
        for toks in lines:
            if toks[0] == "goal":
                if len(toks) != 2:
                    self._err("goal needs one label")
                label = toks[1]
                if label not in ("obj", "self") and not label.isdigit():
                    self._err("bad goal label %r" % label)
                current = block.setdefault(label, [])
            elif current is None:
                self._err("subproof step before any goal")
            elif toks[0] == "pol":
                current.append(("pol", toks[1:]))
            else:
                c, pos = pb.parse_constraint_tokens(toks, 1)
                self._expect_semi(toks, pos)
                current.append(("rup", c))
        return block

    # -- entry points -----------------------------------------------------------------

    def finish(self):
        self.lineno += 1
        if self._block is not None:
            self._err("unterminated subproof block")
        if self.state != "done":
            self._err("truncated proof")
        return self.level


def check_proof(input_constraints, input_objective, proof_lines,
                output_constraints=None, output_objective=None):
    """Run the checker over an iterable of lines; returns a Verdict."""
    chk = ProofChecker(input_constraints, input_objective,
                       output_constraints, output_objective)
    try:
        for line in proof_lines:
            chk.feed(line)
        level = chk.finish()
    except ProofRejected as exc:
        return Verdict(False, error=str(exc), lineno=exc.lineno)
    return Verdict(True, level=level)


def check_wcnf_proof(input_instance, proof_lines, output_instance=None):
    """Convenience wrapper: translate both instances, then check."""
    from . import wcnf as _wcnf

    cons, obj, _ = _wcnf.encode_to_pb(input_instance)
    out_cons = out_obj = None
    if output_instance is not None:
        out_cons, out_obj, _ = _wcnf.encode_to_pb(output_instance)
    return check_proof(cons, obj, proof_lines, out_cons, out_obj)
