"""Evaluator DAG engine: kernels declare fields, the engine schedules them.

Each evaluator names the fields it depends on and the fields it evaluates;
``build_graph`` topologically orders the evaluators transitively required for
the requested outputs. One graph is instantiated per evaluation type, so the
same compute kernels run over plain, dual, or spectral storage depending only
on which type the graph was built for.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .fields import FieldArena

__all__ = [
    "EvaluationType",
    "EVALUATION_TYPES",
    "RESIDUAL", "JACOBIAN", "TANGENT", "SHAPE_TANGENT", "SG_RESIDUAL", "SG_JACOBIAN",
    "Evaluator",
    "EvaluatorGraph",
    "FieldSpec",
    "GraphCycleError",
    "UnsatisfiedDependencyError",
    "DuplicateProducerError",
    "MissingSpecializationError",
    "WorksetContext",
    "build_graph",
    "instantiate_for_all_types",
]


class GraphCycleError(ValueError):
    """The declared dependencies contain a cycle."""


class UnsatisfiedDependencyError(KeyError):
    """A dependent field has no producer and is not an external input."""


class DuplicateProducerError(ValueError):
    """Two evaluators claim to evaluate the same field."""


class MissingSpecializationError(KeyError):
    """A registrar has no implementation for the requested evaluation type."""


@dataclass(frozen=True)
class EvaluationType:
    """A named binding of the two generic scalar kinds.

    ``solution_kind`` is the concrete kind of solution-dependent fields,
    ``mesh_kind`` that of coordinate-dependent fields. The set of types is a
    closed enumeration; adding one touches this module plus the gather and
    scatter specializations only.
    """

    tag: str
    solution_kind: str
    mesh_kind: str

    def concrete_kind(self, relative_kind):
        if relative_kind == "solution":
            return self.solution_kind
        if relative_kind == "mesh":
            return self.mesh_kind
        if relative_kind == "real":
            return "real"
        raise ValueError(f"unknown field kind {relative_kind!r}")

    def __repr__(self):
        return f"EvaluationType({self.tag})"


RESIDUAL = EvaluationType("Residual", "real", "real")
JACOBIAN = EvaluationType("Jacobian", "dual", "real")
TANGENT = EvaluationType("Tangent", "dual", "real")
SHAPE_TANGENT = EvaluationType("ShapeTangent", "dual", "dual")
SG_RESIDUAL = EvaluationType("SGResidual", "pce", "real")
SG_JACOBIAN = EvaluationType("SGJacobian", "nested", "real")

EVALUATION_TYPES = (RESIDUAL, JACOBIAN, TANGENT, SHAPE_TANGENT,
                    SG_RESIDUAL, SG_JACOBIAN)


@dataclass(frozen=True)
class FieldSpec:
    """Declared field: name, symbolic layout, and relative scalar kind."""

    name: str
    dims: tuple
    kind: str = "solution"


class Evaluator:
    """One evaluation kernel with declared dependent and evaluated fields.

    Subclasses set ``name``, ``depends`` and ``evaluates`` (FieldSpec lists)
    and implement ``evaluate(ctx)``. A field may appear in both lists only if
    listed in ``accumulates``, in which case the engine does not zero it
    before the kernel runs.
    """

    name = "evaluator"
    depends = ()
    evaluates = ()
    accumulates = ()

    def evaluate(self, ctx):
        raise NotImplementedError

    def __repr__(self):
        return f"<{type(self).__name__} {self.name!r}>"


class WorksetContext:
    """Per-workset execution state handed to kernels.

    ``workset`` carries the element range and region; ``arena`` owns the field
    buffers; ``staged`` collects extracted global contributions for the
    deterministic merge done by the assembly driver.
    """

    def __init__(self, workset, arena, extra=None):
        self.workset = workset
        self.arena = arena
        self.staged = {}
        self.extra = extra or {}

    def field(self, name):
        return self.arena.get(name)

    def stage(self, key, value):
        self.staged[key] = value


class EvaluatorGraph:
    """Scheduled evaluators for one evaluation type plus arena bookkeeping."""

    def __init__(self, ev_type, schedule, producers, external_inputs, dim_sizes):
        self.ev_type = ev_type
        self.schedule = schedule
        self.producers = producers
        self.external_inputs = frozenset(external_inputs)
        self.dim_sizes = dict(dim_sizes)
        self._arenas = {}
        self.execution_count = 0

    # -- structure -----------------------------------------------------------

    def evaluator_names(self):
        return [ev.name for ev in self.schedule]

    def edges(self):
        """(producer evaluator, consumer evaluator, field) triples."""
        by_field = {}
        for ev in self.schedule:
            for spec in ev.evaluates:
                by_field[spec.name] = ev.name
        out = []
        for ev in self.schedule:
            for spec in ev.depends:
                src = by_field.get(spec.name)
                if src is not None and src != ev.name:
                    out.append((src, ev.name, spec.name))
        return sorted(out)

    def dump_text(self):
        lines = []
        for ev in self.schedule:
            deps = ", ".join(s.name for s in ev.depends) or "-"
            outs = ", ".join(s.name for s in ev.evaluates)
            lines.append(f"{ev.name}: [{deps}] -> [{outs}]")
        return "\n".join(lines) + "\n"

    def dump_dot(self):
        lines = [f'digraph "{self.ev_type.tag}" {{', "  rankdir=BT;"]
        for ev in self.schedule:
            lines.append(f'  "{ev.name}" [shape=box];')
        for src, dst, fname in self.edges():
            lines.append(f'  "{src}" -> "{dst}" [label="{fname}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"

    # -- execution -----------------------------------------------------------

    def arena_for(self, n_elem, deriv_width=None, basis=None, worker=0):
        key = (n_elem, deriv_width, None if basis is None else id(basis), worker)
        arena = self._arenas.get(key)
        if arena is None:
            dim_sizes = dict(self.dim_sizes)
            dim_sizes["elem"] = n_elem
            arena = FieldArena(dim_sizes, deriv_width=deriv_width, basis=basis)
            for ev in self.schedule:
                for spec in list(ev.depends) + list(ev.evaluates):
                    arena.ensure(spec.name, spec.dims,
                                 self.ev_type.concrete_kind(spec.kind))
            self._arenas[key] = arena
        return arena

    def execute(self, ctx):
        """Run every scheduled kernel once, in dependency order."""
        for name in self.external_inputs:
            if name not in ctx.arena:
                raise UnsatisfiedDependencyError(
                    f"external input field {name!r} is not bound")
        for ev in self.schedule:
            for spec in ev.evaluates:
                if spec.name not in ev.accumulates:
                    ctx.arena.get(spec.name).zero()
            try:
                ev.evaluate(ctx)
            except Exception as err:
                raise type(err)(f"[evaluator {ev.name!r}] {err}") from err
        self.execution_count += 1


def build_graph(ev_type, evaluators, required_outputs, external_inputs=(),
                dim_sizes=None):
    """Schedule exactly the evaluators needed for the requested outputs.

    The order is a deterministic topological sort with ties broken by
    registration order. Errors report cycles (with the evaluators involved),
    unsatisfied dependencies (field and consumer), and duplicate producers.
    """
    external_inputs = frozenset(external_inputs)
    producers = {}
    for ev in evaluators:
        if not ev.evaluates:
            raise ValueError(f"evaluator {ev.name!r} evaluates no fields")
        for spec in ev.depends:
            if spec.name in {s.name for s in ev.evaluates} \
                    and spec.name not in ev.accumulates:
                raise ValueError(
                    f"evaluator {ev.name!r} both depends on and evaluates "
                    f"{spec.name!r} without declaring it an accumulator")
        for spec in ev.evaluates:
            if spec.name in producers:
                raise DuplicateProducerError(
                    f"field {spec.name!r} produced by both "
                    f"{producers[spec.name].name!r} and {ev.name!r}")
            producers[spec.name] = ev

    # layout/kind consistency between producer and consumers
    declared = {}
    for ev in evaluators:
        for spec in list(ev.evaluates) + list(ev.depends):
            seen = declared.get(spec.name)
            if seen is None:
                declared[spec.name] = (spec, ev.name)
            elif seen[0].dims != spec.dims or seen[0].kind != spec.kind:
                raise ValueError(
                    f"field {spec.name!r} declared as {seen[0]} by "
                    f"{seen[1]!r} but as {spec} by {ev.name!r}")

    # prune to the transitive producer closure of the requested outputs
    needed, stack = [], []
    for name in required_outputs:
        ev = producers.get(name)
        if ev is None and name not in external_inputs:
            raise UnsatisfiedDependencyError(
                f"requested output {name!r} has no producer")
        if ev is not None:
            stack.append(ev)
    needed_set = set()
    while stack:
        ev = stack.pop()
        if id(ev) in needed_set:
            continue
        needed_set.add(id(ev))
        needed.append(ev)
        for spec in ev.depends:
            dep = producers.get(spec.name)
            if dep is None:
                if spec.name not in external_inputs:
                    raise UnsatisfiedDependencyError(
                        f"field {spec.name!r} needed by {ev.name!r} has no "
                        f"producer and is not an external input")
            else:
                stack.append(dep)
    order_index = {id(ev): i for i, ev in enumerate(evaluators)}
    needed.sort(key=lambda ev: order_index[id(ev)])

    # Kahn's algorithm; the ready heap is keyed by registration order
    deps_of = {}
    consumers = {}
    for ev in needed:
        deps = set()
        for spec in ev.depends:
            dep = producers.get(spec.name)
            if dep is not None and id(dep) in needed_set and dep is not ev:
                deps.add(id(dep))
                consumers.setdefault(id(dep), set()).add(id(ev))
        deps_of[id(ev)] = deps
    by_id = {id(ev): ev for ev in needed}
    ready = [ev for ev in needed if not deps_of[id(ev)]]
    schedule = []
    while ready:
        ready.sort(key=lambda ev: order_index[id(ev)])
        ev = ready.pop(0)
        schedule.append(ev)
        for cid in sorted(consumers.get(id(ev), ()), key=lambda c: order_index[c]):
            deps_of[cid].discard(id(ev))
            if not deps_of[cid]:
                ready.append(by_id[cid])
    if len(schedule) != len(needed):
        stuck = sorted(ev.name for ev in needed if ev not in schedule)
        raise GraphCycleError(f"dependency cycle among evaluators: {stuck}")

    return EvaluatorGraph(ev_type, schedule, producers, external_inputs,
                          dim_sizes or {})


def instantiate_for_all_types(registrars, types, required_outputs,
                              external_inputs=(), dim_sizes=None):
    """One independent graph per evaluation type from per-type registrars.

    Each registrar is called with the evaluation type and returns one
    evaluator (or a list of them); shared read-only configuration lives inside
    the registrar closures. A registrar that cannot build for a requested type
    raises :class:`MissingSpecializationError` naming itself.
    """
    graphs = {}
    for ev_type in types:
        evaluators = []
        for registrar in registrars:
            try:
                built = registrar(ev_type)
            except MissingSpecializationError:
                raise
            except KeyError as err:
                name = getattr(registrar, "__name__", repr(registrar))
                raise MissingSpecializationError(
                    f"registrar {name} has no specialization for "
                    f"{ev_type.tag}") from err
            if isinstance(built, Evaluator):
                evaluators.append(built)
            else:
                evaluators.extend(built)
        graphs[ev_type] = build_graph(ev_type, evaluators, required_outputs,
                                      external_inputs, dim_sizes)
    return graphs
