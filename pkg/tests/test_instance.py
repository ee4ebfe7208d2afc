import pytest

from shopbench import instance as im
from shopbench import notation as nt
from shopbench.errors import InstanceError

from util import build_shop


def test_load_orlib_two_by_two():
    inst = im.load_orlib("2 2\n0 3 1 2\n1 2 0 4")
    assert inst.n_jobs == 2 and inst.n_machines == 2
    j0, j1 = inst.jobs
    assert [(op.op_type, op.base_duration) for op in j0.operations] == [(0, 3.0), (1, 2.0)]
    assert [(op.op_type, op.base_duration) for op in j1.operations] == [(1, 2.0), (0, 4.0)]
    assert inst.triplet.render() == "Jm||C_max"
    assert all(j.release == 0.0 for j in inst.jobs)


def test_load_orlib_minimal():
    inst = im.load_orlib("1 1\n0 5")
    assert inst.n_jobs == 1
    assert inst.jobs[0].operations[0].base_duration == 5.0


def test_load_orlib_ft06_checksum(ft06, ft06_text):
    assert ft06.n_jobs == 6 and ft06.n_machines == 6
    assert all(len(j.operations) == 6 for j in ft06.jobs)
    assert all(op.base_duration > 0 for j in ft06.jobs for op in j.operations)
    # independent checksum: duration sum = all integers minus header minus machine ids
    numbers = [int(x) for x in ft06_text.split()]
    body = numbers[2:]
    machine_sum = sum(body[0::2])
    expected_duration_sum = sum(body) - machine_sum
    parsed_sum = sum(op.base_duration for j in ft06.jobs for op in j.operations)
    assert parsed_sum == expected_duration_sum


@pytest.mark.parametrize("text,fragment", [
    ("", "empty"),
    ("2\n0 3 1 2", "header"),
    ("1 x\n0 3", "header"),
    ("2 2\n0 3 1 2", "expected 2 job rows"),
    ("1 2\n0 3 1", "fields"),
    ("1 1\n3 5", "out of range"),
    ("1 1\n0 0", "nonpositive"),
    ("1 1\n0 -2", "nonpositive"),
])
def test_load_orlib_rejects_malformed(text, fragment):
    with pytest.raises(InstanceError) as err:
        im.load_orlib(text)
    assert fragment in str(err.value)


# -- generation ---------------------------------------------------------------


def test_generator_is_deterministic():
    t = nt.parse_triplet("Jm||C_max")
    shape = im.GenShape(3, 3, 1, (1, 9), 1.5)
    a = im.generate_instance(t, shape, 42)
    b = im.generate_instance(t, shape, 42)
    assert im.serialize_instance(a) == im.serialize_instance(b)


def test_generator_seed_changes_durations():
    t = nt.parse_triplet("Jm||C_max")
    shape = im.GenShape(3, 3, 1, (1, 9), 1.5)
    a = im.generate_instance(t, shape, 42)
    b = im.generate_instance(t, shape, 43)
    da = sorted(op.base_duration for j in a.jobs for op in j.operations)
    db = sorted(op.base_duration for j in b.jobs for op in j.operations)
    assert da != db


def test_generator_flexible_coverage():
    t = nt.parse_triplet("FJc|S_jk|T_ave")
    inst = im.generate_instance(t, im.GenShape(4, 2, 2, (1, 9), 1.5), 7)
    for j in inst.jobs:
        for op in j.operations:
            assert len(inst.eligible_machines(op)) >= 2
    assert inst.setup_times is not None and inst.setup_times.kind == "S_jk"
    assert im.validate_instance(inst) == []


def test_generator_duration_bounds_and_dues():
    t = nt.parse_triplet("Jm||C_max")
    inst = im.generate_instance(t, im.GenShape(5, 3, 1, (2, 6), 2.0), 3)
    for j in inst.jobs:
        total = sum(op.base_duration for op in j.operations)
        assert j.due == j.release + 2.0 * total
        for op in j.operations:
            assert 2 <= op.base_duration <= 6


def test_generator_shape_mismatch():
    t = nt.parse_triplet("Jm||C_max")
    with pytest.raises(InstanceError):
        im.generate_instance(t, im.GenShape(3, 3, 2, (1, 9), 1.5), 1)
    with pytest.raises(InstanceError):
        im.generate_instance(nt.parse_triplet("Pm||C_max"),
                             im.GenShape(3, 2, 2, (1, 9), 1.5), 1)


def test_generator_rejects_invalid_triplet():
    t = nt.parse_triplet("Jm|block_in|C_max")  # blocking needs flexibility
    with pytest.raises(InstanceError):
        im.generate_instance(t, im.GenShape(3, 3, 1, (1, 9), 1.5), 1)


def test_generator_stochastic_sections():
    t = nt.parse_triplet("Jm|r_j^s,p_ji^s,brkdwn^s|C_max")
    inst = im.generate_instance(t, im.GenShape(3, 2, 1, (1, 9), 1.5), 11)
    assert inst.stochastic.release is not None
    assert inst.stochastic.duration_factor is not None
    assert inst.stochastic.breakdowns is not None
    assert im.validate_instance(inst) == []


def test_generator_transport():
    t = nt.parse_triplet("FJc|tr(2)|C_max")
    inst = im.generate_instance(t, im.GenShape(3, 2, 2, (2, 4), 1.5), 5)
    assert inst.transport.mode == "fleet" and inst.transport.fleet_size == 2
    m = inst.n_machines
    assert len(inst.transport.travel) == m
    assert all(inst.transport.travel[i][i] == 0 for i in range(m))


# -- validation ---------------------------------------------------------------


def test_validate_clean_instance(ft06):
    assert im.validate_instance(ft06) == []


def test_validate_uncoverable_operation():
    inst = build_shop([[0, 1]], [[2, 3]])
    bad = im.Instance(
        triplet=inst.triplet,
        jobs=(im.Job(0, (im.Operation(0, 0, 5, 2.0),)),),  # type 5 has no machine
        resources=inst.resources)
    codes = [v.code for v in im.validate_instance(bad)]
    assert "uncoverable-operation" in codes


def test_validate_setup_tensor_shape():
    inst = build_shop([[0, 1], [1, 0]], [[2, 3], [1, 2]])
    t = nt.parse_triplet("Jm|S_jki|C_max")
    bad = im.Instance(triplet=t, jobs=inst.jobs, resources=inst.resources,
                      setup_times=im.SetupTimes("S_jki", (((0.0, 1.0), (1.0, 0.0)),)))
    codes = [v.code for v in im.validate_instance(bad)]
    assert "setup-tensor-shape" in codes


def test_validate_tag_field_correspondence():
    inst = build_shop([[0, 1]], [[2, 3]])
    t = nt.parse_triplet("Jm|brkdwn^s|C_max")  # tag without distributions
    bad = im.Instance(triplet=t, jobs=inst.jobs, resources=inst.resources)
    codes = [v.code for v in im.validate_instance(bad)]
    assert "breakdown-dist-missing" in codes


def test_validate_cycle_detection():
    ops = (im.Operation(0, 0, 0, 1.0, frozenset([1])),
           im.Operation(0, 1, 1, 1.0, frozenset([0])))
    inst = build_shop([[0, 1]], [[1, 1]])
    bad = im.Instance(triplet=inst.triplet, jobs=(im.Job(0, ops),),
                      resources=inst.resources)
    codes = [v.code for v in im.validate_instance(bad)]
    assert "precedence-cycle" in codes


# -- classification -----------------------------------------------------------


def test_derive_triplet_ft06(ft06):
    t = im.derive_triplet(ft06)
    assert t.render() == "Jm||C_max"


def test_derive_flow_shop():
    inst = build_shop([[0, 1, 2], [0, 1, 2]], [[1, 2, 3], [2, 2, 2]])
    assert im.derive_triplet(inst).alpha.kind is nt.SetupKind.FM


def test_derive_open_shop():
    ops0 = tuple(im.Operation(0, k, k, 1.0, frozenset()) for k in range(2))
    ops1 = tuple(im.Operation(1, k, k, 2.0, frozenset()) for k in range(2))
    base = build_shop([[0, 1], [1, 0]], [[1, 1], [1, 1]])
    inst = im.Instance(triplet=base.triplet,
                       jobs=(im.Job(0, ops0), im.Job(1, ops1)),
                       resources=base.resources)
    assert im.derive_triplet(inst).alpha.kind is nt.SetupKind.OM


def test_derive_never_more_general_than_generator_request():
    for text, seed in [("Jm||C_max", 1), ("Fm||C_max", 2), ("FJc||C_max", 3),
                       ("Om||C_max", 4), ("Pm||C_max", 5)]:
        t = nt.parse_triplet(text)
        mpw = 2 if t.alpha.kind in (nt.SetupKind.FJC, nt.SetupKind.PM) else 1
        wcs = 1 if t.alpha.kind is nt.SetupKind.PM else 3
        inst = im.generate_instance(t, im.GenShape(3, wcs, mpw, (1, 9), 1.5), seed)
        derived = im.derive_triplet(inst)
        assert nt.subsumes(t.alpha.kind, derived.alpha.kind)


# -- serialization --------------------------------------------------------------


def test_json_round_trip_identity(ft06):
    text = im.serialize_instance(ft06)
    again = im.deserialize_instance(text)
    assert im.serialize_instance(again) == text
    assert again == ft06


def test_json_round_trip_rich_instance():
    t = nt.parse_triplet("FJc|S_jk,tr(2),p_ji^s,brkdwn^s|T_ave")
    inst = im.generate_instance(t, im.GenShape(3, 2, 2, (1, 9), 1.5), 9)
    text = im.serialize_instance(inst)
    again = im.deserialize_instance(text)
    assert im.serialize_instance(again) == text
    assert again == inst


def test_json_rejects_unknown_schema():
    with pytest.raises(InstanceError):
        im.instance_from_dict({"schema_version": 99})
