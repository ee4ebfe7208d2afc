import pytest
from hypothesis import given, settings, strategies as st

from shopbench import objectives as ob
from shopbench import notation as nt
from shopbench.errors import MetricUnavailable
from shopbench.rng import RngStream

from util import pareto_brute_force


def make_record(jobs, ops=(), machines=(), vehicles=(), horizon=10.0, sink=()):
    return ob.ScheduleRecord(
        jobs=[ob.JobRecord(*j) for j in jobs],
        ops=[ob.OpRecord(*o) for o in ops],
        machines=[ob.MachineRecord(machine_id=m[0], busy=list(m[1]),
                                   setup=list(m[2]), down=list(m[3]),
                                   buffer_series=list(m[4])) for m in machines],
        vehicles=[ob.VehicleRecord(v[0], list(v[1])) for v in vehicles],
        sink_series=list(sink),
        horizon=horizon)


# -- per-job metrics -----------------------------------------------------------


def test_job_metrics_basic():
    rec = make_record([(0, 2.0, 8.0, 5.0, 10.0)])
    jm = ob.job_metrics(rec)[0]
    assert jm.flow == 8.0
    assert jm.idle == 3.0
    assert jm.lateness == 2.0
    assert jm.tardiness == 2.0
    assert jm.unit_cost == 1.0
    assert jm.earliness == 0.0


def test_job_metrics_on_time_boundary():
    # completion exactly at the due date: not tardy (strict inequality)
    rec = make_record([(0, 0.0, 7.0, 4.0, 7.0)])
    jm = ob.job_metrics(rec)[0]
    assert jm.lateness == 0.0 and jm.tardiness == 0.0
    assert jm.unit_cost == 0.0 and jm.earliness == 0.0


def test_job_metrics_early_job():
    rec = make_record([(0, 0.0, 9.0, 4.0, 6.0)])
    jm = ob.job_metrics(rec)[0]
    assert jm.lateness == -3.0 and jm.tardiness == 0.0
    assert jm.unit_cost == 0.0 and jm.earliness == 3.0


def test_job_metrics_pending_and_missing_due():
    rec = make_record([(0, 0.0, None, 4.0, None), (1, 0.0, None, 2.0, 5.0)])
    table = ob.job_metrics(rec)
    assert table[0].pending
    assert table[1].lateness is None and table[1].flow == 5.0


# -- makespan / throughput ------------------------------------------------------


def test_makespan():
    rec = make_record([(0, 0, None, 1, 5.0), (1, 0, None, 1, 9.0), (2, 0, None, 1, 7.0)])
    assert ob.makespan(rec) == 9.0


def test_makespan_single():
    assert ob.makespan(make_record([(0, 0, None, 1, 5.0)])) == 5.0


def test_makespan_requires_finished():
    with pytest.raises(MetricUnavailable):
        ob.makespan(make_record([(0, 0, None, 1, None)]))


def test_throughput():
    jobs = [(j, 0.0, None, 1.0, c) for j, c in enumerate((3.0, 6.0, 11.0, None, None))]
    rec = make_record(jobs)
    out = ob.throughput(rec, 10.0)
    assert out["jobs"] == pytest.approx(0.2)
    assert ob.throughput(rec, 1.0)["jobs"] == 0.0
    with pytest.raises(MetricUnavailable):
        ob.throughput(rec, 0.0)


# -- resource metrics -----------------------------------------------------------


def test_machine_utilization():
    rec = make_record(
        [(0, 0, None, 6.0, 6.0)],
        ops=[(0, 0, 0, 0.0, 6.0)],
        machines=[(0, [(0.0, 6.0)], [], [], [(0.0, 0)])],
    )
    per, fleet = ob.resource_metrics(rec, 10.0)
    assert per[0].utilization == pytest.approx(0.6)
    assert fleet is None


def test_unused_machine_and_constant_buffer():
    rec = make_record(
        [(0, 0, None, 1.0, 1.0)],
        machines=[(0, [], [], [], [(0.0, 2)])],
    )
    per, _ = ob.resource_metrics(rec, 8.0)
    assert per[0].utilization == 0.0
    assert per[0].buffer_length_avg == pytest.approx(2.0)
    assert per[0].buffered_time == pytest.approx(16.0)


def test_transport_share_and_down_exclusion():
    rec = make_record(
        [(0, 0, None, 4.0, 4.0)],
        ops=[(0, 0, 0, 0.0, 4.0)],
        machines=[(0, [(0.0, 4.0)], [], [(4.0, 8.0)], [(0.0, 0)])],
        vehicles=[(0, [(0.0, 3.0)])],
    )
    per, fleet = ob.resource_metrics(rec, 10.0)
    assert fleet == pytest.approx(0.3)
    assert per[0].utilization == pytest.approx(0.4)
    per2, _ = ob.resource_metrics(rec, 10.0, exclude_down=True)
    assert per2[0].utilization == pytest.approx(4.0 / 6.0)


# -- objective evaluation ---------------------------------------------------------


def _rec_tardy():
    # T = {0, 2, 3}
    return make_record([
        (0, 0.0, 5.0, 1.0, 4.0),
        (1, 0.0, 5.0, 1.0, 7.0),
        (2, 0.0, 5.0, 1.0, 8.0),
    ])


def test_evaluate_single_sum():
    spec = nt.parse_triplet("Jm||sum_T_j").gamma
    assert ob.evaluate_objective(_rec_tardy(), spec, 10.0) == 5.0


def test_evaluate_scalarized():
    rec = make_record(
        [(0, 0.0, 8.0, 6.0, 10.0)],
        ops=[(0, 0, 0, 0.0, 6.0)],
        machines=[(0, [(0.0, 6.0)], [], [], [(0.0, 0)])],
    )
    spec = nt.parse_triplet("Jm||0.5*C_max+0.5*T_ave").gamma
    # C_max = 10, T_ave = 2
    assert ob.evaluate_objective(rec, spec, 10.0) == pytest.approx(6.0)


def test_evaluate_pareto_tuple():
    rec = make_record(
        [(0, 0.0, None, 6.0, 10.0)],
        ops=[(0, 0, 0, 0.0, 6.0)],
        machines=[(0, [(0.0, 6.0)], [], [], [(0.0, 0)])],
    )
    spec = nt.parse_triplet("Jm||pareto(C_max,Utl_ave)").gamma
    value = ob.evaluate_objective(rec, spec, 10.0)
    assert value == (10.0, pytest.approx(0.6))


def test_count_aggregation_counts_tardy_jobs():
    spec = nt.parse_triplet("Jm||count_U_j").gamma
    assert ob.evaluate_objective(_rec_tardy(), spec, 10.0) == 2.0


def test_missing_due_dates_raise():
    rec = make_record([(0, 0.0, None, 1.0, 4.0)])
    with pytest.raises(MetricUnavailable):
        ob.evaluate_objective(rec, nt.parse_triplet("Jm||T_ave").gamma, 10.0)


# -- identity properties ------------------------------------------------------------

finished_jobs = st.builds(
    lambda r, total, slack, due: (0, r, due, total, r + total + slack),
    st.floats(0, 50), st.floats(0.1, 60), st.floats(0, 40),
    st.one_of(st.none(), st.floats(0, 150)))


@given(st.lists(finished_jobs, min_size=1, max_size=6))
@settings(max_examples=300)
def test_job_metric_identities(rows):
    rows = [(j,) + r[1:] for j, r in enumerate(rows)]
    table = ob.job_metrics(make_record(rows))
    for jm in table.values():
        assert jm.idle >= -1e-9
        if jm.lateness is None:
            continue
        assert jm.tardiness - jm.earliness == pytest.approx(jm.lateness)
        assert jm.tardiness * jm.earliness == pytest.approx(0.0)
        assert (jm.unit_cost == 1.0) == (jm.tardiness > 0)


# -- dominance filtering ---------------------------------------------------------


def test_pareto_strict_dominance():
    assert ob.pareto_front([(1, 1), (2, 2)], ["min", "min"]) == [0]


def test_pareto_incomparable():
    assert ob.pareto_front([(1, 2), (2, 1)], ["min", "min"]) == [0, 1]


def test_pareto_max_direction():
    assert ob.pareto_front([(1, 1), (2, 2)], ["max", "max"]) == [1]


def test_pareto_duplicates_stay():
    assert ob.pareto_front([(1, 1), (1, 1), (2, 2)], ["min", "min"]) == [0, 1]


def test_pareto_dimension_mismatch():
    with pytest.raises(ValueError):
        ob.pareto_front([(1, 2), (1,)], ["min", "min"])


@pytest.mark.parametrize("dims,directions", [
    (2, ["min", "min"]), (3, ["min", "max", "min"]), (4, ["max"] * 4)])
def test_pareto_matches_brute_force(dims, directions):
    rng = RngStream(17, f"pareto-{dims}")
    points = [tuple(rng.randint(0, 9) for _ in range(dims)) for _ in range(100)]
    assert ob.pareto_front(points, directions) == sorted(
        pareto_brute_force(points, directions))
