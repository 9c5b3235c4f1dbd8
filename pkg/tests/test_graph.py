"""Graph scheduling, pruning, per-type instantiation, and execution."""

import numpy as np
import pytest

from embedfem import graph as gr
from embedfem.graph import Evaluator, FieldSpec


class Named(Evaluator):
    """Kernel that writes a constant into each evaluated field and logs calls."""

    def __init__(self, name, depends, evaluates, log=None, value=1.0):
        self.name = name
        self.depends = tuple(FieldSpec(d, ("elem",), "real") for d in depends)
        self.evaluates = tuple(FieldSpec(e, ("elem",), "real") for e in evaluates)
        self.log = log if log is not None else []
        self.value = value

    def evaluate(self, ctx):
        self.log.append(self.name)
        for spec in self.evaluates:
            total = self.value
            for dep in self.depends:
                total = total + ctx.field(dep.name).data
            ctx.field(spec.name).accumulate(total)


def build(evaluators, outputs, **kw):
    return gr.build_graph(gr.RESIDUAL, evaluators, outputs,
                          dim_sizes={"elem": 1}, **kw)


def test_chain_schedule():
    a = Named("A", [], ["fa"])
    b = Named("B", ["fa"], ["fb"])
    c = Named("C", ["fb"], ["fc"])
    g = build([a, b, c], ["fc"])
    assert g.evaluator_names() == ["A", "B", "C"]


def test_diamond_ties_broken_by_registration_order():
    a = Named("A", [], ["fa"])
    b = Named("B", ["fa"], ["fb"])
    c = Named("C", ["fa"], ["fc"])
    d = Named("D", ["fb", "fc"], ["fd"])
    g = build([a, b, c, d], ["fd"])
    assert g.evaluator_names() == ["A", "B", "C", "D"]
    g2 = build([a, c, b, d], ["fd"])
    assert g2.evaluator_names() == ["A", "C", "B", "D"]


def test_pruning_unrequested_tail():
    a = Named("A", [], ["fa"])
    b = Named("B", ["fa"], ["fb"])
    c = Named("C", ["fb"], ["fc"])
    g = build([a, b, c], ["fb"])
    assert g.evaluator_names() == ["A", "B"]


def test_empty_outputs_schedule_nothing():
    a = Named("A", [], ["fa"])
    g = build([a], [])
    assert g.evaluator_names() == []
    ctx = gr.WorksetContext(None, g.arena_for(1))
    g.execute(ctx)
    assert a.log == []


def test_cycle_reported_with_members():
    a = Named("A", ["fc"], ["fa"])
    b = Named("B", ["fa"], ["fb"])
    c = Named("C", ["fb"], ["fc"])
    with pytest.raises(gr.GraphCycleError, match="A"):
        build([a, b, c], ["fc"])


def test_unsatisfied_dependency_names_field_and_consumer():
    b = Named("B", ["missing"], ["fb"])
    with pytest.raises(gr.UnsatisfiedDependencyError, match="missing.*'B'"):
        build([b], ["fb"])


def test_external_input_satisfies_dependency():
    b = Named("B", ["given"], ["fb"])
    g = build([b], ["fb"], external_inputs=["given"])
    arena = g.arena_for(1)
    arena.get("given").fill(2.0)
    ctx = gr.WorksetContext(None, arena)
    g.execute(ctx)
    assert arena.get("fb").data[0] == 3.0


def test_duplicate_producer_rejected():
    a1 = Named("A1", [], ["fa"])
    a2 = Named("A2", [], ["fa"])
    with pytest.raises(gr.DuplicateProducerError, match="fa"):
        build([a1, a2], ["fa"])


def test_inconsistent_declarations_rejected():
    a = Named("A", [], ["fa"])
    b = Named("B", ["fa"], ["fb"])
    b.depends = (FieldSpec("fa", ("elem", "node"), "real"),)
    with pytest.raises(ValueError, match="fa"):
        build([a, b], ["fb"])


def test_execution_runs_each_kernel_once_in_order():
    log = []
    a = Named("A", [], ["fa"], log)
    b = Named("B", ["fa"], ["fb"], log)
    g = build([a, b], ["fb"])
    ctx = gr.WorksetContext(None, g.arena_for(3))
    g.execute(ctx)
    assert log == ["A", "B"]
    assert np.all(ctx.field("fb").data == 2.0)


def test_reexecution_reuses_arena_without_reallocation():
    a = Named("A", [], ["fa"])
    b = Named("B", ["fa"], ["fb"])
    g = build([a, b], ["fb"])
    arena = g.arena_for(4)
    allocs = arena.allocations
    g.execute(gr.WorksetContext(None, arena))
    g.execute(gr.WorksetContext(None, g.arena_for(4)))
    assert g.arena_for(4) is arena
    assert arena.allocations == allocs
    # evaluated fields are re-zeroed, not accumulated across executions
    assert np.all(arena.get("fb").data == 2.0)


def test_kernel_errors_carry_evaluator_name():
    class Failing(Named):
        def evaluate(self, ctx):
            raise ValueError("negative determinant")

    g = build([Failing("Geom", [], ["fa"])], ["fa"])
    with pytest.raises(ValueError, match="'Geom'.*negative determinant"):
        g.execute(gr.WorksetContext(None, g.arena_for(1)))


def test_instantiate_for_all_types_structural_equality():
    def reg_a(ev_type):
        return Named("A", [], ["fa"])

    def reg_b(ev_type):
        return Named("B", ["fa"], ["fb"])

    graphs = gr.instantiate_for_all_types(
        [reg_a, reg_b], [gr.RESIDUAL, gr.JACOBIAN], ["fb"],
        dim_sizes={"elem": 1})
    assert len(graphs) == 2
    names = {t: g.evaluator_names() for t, g in graphs.items()}
    assert names[gr.RESIDUAL] == names[gr.JACOBIAN]
    assert graphs[gr.RESIDUAL].edges() == graphs[gr.JACOBIAN].edges()


def test_registrar_missing_specialization_is_named():
    table = {gr.RESIDUAL.tag: lambda: Named("A", [], ["fa"])}

    def gather_registrar(ev_type):
        return table[ev_type.tag]()

    with pytest.raises(gr.MissingSpecializationError, match="gather_registrar"):
        gr.instantiate_for_all_types([gather_registrar],
                                     [gr.RESIDUAL, gr.JACOBIAN], ["fa"],
                                     dim_sizes={"elem": 1})


def test_evaluation_type_scalar_kind_table():
    table = {t.tag: (t.solution_kind, t.mesh_kind) for t in gr.EVALUATION_TYPES}
    assert table == {
        "Residual": ("real", "real"),
        "Jacobian": ("dual", "real"),
        "Tangent": ("dual", "real"),
        "ShapeTangent": ("dual", "dual"),
        "SGResidual": ("pce", "real"),
        "SGJacobian": ("nested", "real"),
    }


def test_dump_formats():
    a = Named("A", [], ["fa"])
    b = Named("B", ["fa"], ["fb"])
    g = build([a, b], ["fb"])
    text = g.dump_text()
    assert "A: [-] -> [fa]" in text
    dot = g.dump_dot()
    assert dot.startswith("digraph")
    assert '"A" -> "B" [label="fa"]' in dot
