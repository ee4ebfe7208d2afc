"""Concrete problem instances: jobs, machines, transport, stochastic inputs.

Instances are immutable after construction and carry everything a run
needs: the classification triplet, job routings with base durations,
machines grouped into work centers, optional transport and setup-time
data, and distribution choices for each stochastic tag. A versioned JSON
schema is the native serialization; the classic single-file benchmark
text format is supported read-only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

from . import notation
from .errors import InstanceError
from .notation import (Aggregation, Constraint, MetricId, ProblemTriplet, SetupClass,
                       SetupKind, SingleObjective, Tag, Violation, parse_triplet)
from .rng import RngStream

SCHEMA_VERSION = 1

UNBOUNDED = None  # buffer capacity sentinel


@dataclass(frozen=True)
class Dist:
    """A sampleable scalar: constant, uniform(a,b), exponential(rate) or
    normal(mu,sigma) truncated at zero."""

    kind: str
    a: float = 0.0
    b: float = 0.0

    _KINDS = ("constant", "uniform", "exponential", "normal")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise InstanceError(f"unknown distribution kind {self.kind!r}")
        if self.kind == "uniform" and self.b < self.a:
            raise InstanceError("uniform needs a <= b")
        if self.kind == "exponential" and self.a <= 0:
            raise InstanceError("exponential needs a positive rate")
        if self.kind == "normal" and self.b <= 0:
            raise InstanceError("normal needs a positive sigma")

    def sample(self, rng: RngStream) -> float:
        if self.kind == "constant":
            return self.a
        if self.kind == "uniform":
            return rng.uniform(self.a, self.b)
        if self.kind == "exponential":
            return rng.exponential(self.a)
        return rng.normal_truncated(self.a, self.b)

    def mean(self) -> float:
        """Expected value; used for deterministic projections."""
        if self.kind == "constant":
            return self.a
        if self.kind == "uniform":
            return 0.5 * (self.a + self.b)
        if self.kind == "exponential":
            return 1.0 / self.a
        return self.a  # truncation bias ignored on purpose

    def to_dict(self) -> dict:
        return {"kind": self.kind, "a": self.a, "b": self.b}

    @classmethod
    def from_dict(cls, d: dict) -> "Dist":
        return cls(d["kind"], d.get("a", 0.0), d.get("b", 0.0))


@dataclass(frozen=True)
class Operation:
    job_id: int
    op_index: int
    op_type: int  # work-center id
    base_duration: float
    predecessors: frozenset[int] = frozenset()

    def __post_init__(self):
        if self.base_duration <= 0:
            raise InstanceError(
                f"operation ({self.job_id},{self.op_index}) needs a positive duration")


@dataclass(frozen=True)
class Job:
    job_id: int
    operations: tuple[Operation, ...]
    release: float = 0.0
    due: float | None = None
    family: int | None = None

    def __post_init__(self):
        if self.release < 0:
            raise InstanceError(f"job {self.job_id} has a negative release date")


@dataclass(frozen=True)
class BatchSpec:
    kind: str  # "fixed" | "dynamic"
    size: int = 1
    duration: float | None = None  # fixed batches only

    def __post_init__(self):
        if self.kind not in ("fixed", "dynamic"):
            raise InstanceError(f"unknown batch kind {self.kind!r}")
        if self.size < 1:
            raise InstanceError("batch size must be >= 1")
        if self.kind == "fixed" and (self.duration is None or self.duration <= 0):
            raise InstanceError("fixed batches need a positive duration")


@dataclass(frozen=True)
class Resource:
    machine_id: int
    work_center: int
    speed: float = 1.0
    speed_by_job: tuple[tuple[int, float], ...] | None = None  # unrelated-machine setups
    capabilities: frozenset[int] = frozenset()
    input_buffer_capacity: int | None = UNBOUNDED
    output_buffer_capacity: int | None = UNBOUNDED
    batch_spec: BatchSpec | None = None
    eligible_jobs: frozenset[int] | None = None  # job-level eligibility
    setup_matrix_ref: str | None = None

    def __post_init__(self):
        if self.speed <= 0:
            raise InstanceError(f"machine {self.machine_id} needs a positive speed")
        if not self.capabilities:
            raise InstanceError(f"machine {self.machine_id} has no capabilities")

    def speed_for(self, job_id: int) -> float:
        if self.speed_by_job:
            for jid, v in self.speed_by_job:
                if jid == job_id:
                    return v
        return self.speed


@dataclass(frozen=True)
class TransportSpec:
    mode: str = "none"  # none | infinite | fleet
    fleet_size: int = 0
    travel: tuple[tuple[float, ...], ...] | None = None  # machine x machine
    home: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.mode not in ("none", "infinite", "fleet"):
            raise InstanceError(f"unknown transport mode {self.mode!r}")
        if self.mode == "fleet" and self.fleet_size < 1:
            raise InstanceError("fleet transport needs >= 1 vehicle")


@dataclass(frozen=True)
class StochasticSpec:
    release: tuple[tuple[int, Dist], ...] | None = None  # per job
    duration_factor: Dist | None = None  # multiplicative, > 0
    breakdowns: tuple[tuple[int, Dist, Dist], ...] | None = None  # machine, interfailure, repair
    demand: Dist | None = None  # interarrival

    def release_dist(self, job_id: int) -> Dist | None:
        if self.release is None:
            return None
        for jid, d in self.release:
            if jid == job_id:
                return d
        return None

    def breakdown_dists(self, machine_id: int) -> tuple[Dist, Dist] | None:
        if self.breakdowns is None:
            return None
        for mid, fail, repair in self.breakdowns:
            if mid == machine_id:
                return fail, repair
        return None


@dataclass(frozen=True)
class SetupTimes:
    kind: str  # fmls | S_jk | S_jki
    # fmls: family x family; S_jk: job x job; S_jki: machine -> job x job
    matrix: tuple = ()

    def __post_init__(self):
        if self.kind not in ("fmls", "S_jk", "S_jki"):
            raise InstanceError(f"unknown setup-time kind {self.kind!r}")


@dataclass(frozen=True)
class ScriptedEvent:
    """Exogenous event written into the instance itself (planned maintenance,
    capacity additions, deterministic demand)."""

    time: float
    kind: str  # breakdown_start | breakdown_end | demand_arrival | capacity_add
    payload: int = -1

    def __post_init__(self):
        if self.time < 0:
            raise InstanceError("scripted events cannot predate time zero")
        if self.kind not in ("breakdown_start", "breakdown_end", "demand_arrival",
                             "capacity_add"):
            raise InstanceError(f"unknown scripted event kind {self.kind!r}")


@dataclass(frozen=True)
class Instance:
    triplet: ProblemTriplet
    jobs: tuple[Job, ...]
    resources: tuple[Resource, ...]
    transport: TransportSpec = TransportSpec()
    stochastic: StochasticSpec = StochasticSpec()
    setup_times: SetupTimes | None = None
    scripted_events: tuple[ScriptedEvent, ...] = ()

    @property
    def n_jobs(self) -> int:
        return len(self.jobs)

    @property
    def n_machines(self) -> int:
        return len(self.resources)

    @property
    def max_ops(self) -> int:
        return max((len(j.operations) for j in self.jobs), default=0)

    def machine(self, machine_id: int) -> Resource:
        for r in self.resources:
            if r.machine_id == machine_id:
                return r
        raise InstanceError(f"no machine {machine_id}")

    def machines_in(self, work_center: int) -> list[Resource]:
        return [r for r in self.resources if r.work_center == work_center]

    def eligible_machines(self, op: Operation) -> list[Resource]:
        out = []
        for r in self.resources:
            if op.op_type not in r.capabilities:
                continue
            if r.eligible_jobs is not None and op.job_id not in r.eligible_jobs:
                continue
            out.append(r)
        return out

    def setup_time(self, machine_id: int, prev_job: int | None, next_job: int) -> float:
        """Changeover time incurred before `next_job` starts on the machine.

        A fresh machine (no previous job) needs no setup.
        """
        st = self.setup_times
        if st is None or prev_job is None:
            return 0.0
        if st.kind == "fmls":
            fa = self.jobs[prev_job].family
            fb = self.jobs[next_job].family
            if fa is None or fb is None or fa == fb:
                return 0.0
            return st.matrix[fa][fb]
        if st.kind == "S_jk":
            return st.matrix[prev_job][next_job]
        return st.matrix[machine_id][prev_job][next_job]


# ---------------------------------------------------------------------------
# classic benchmark text format (read-only)


def load_orlib(text: str) -> Instance:
    """Parse the standard job-shop text format.

    First line: ``n m``; then one row per job with m ``machine duration``
    pairs in processing order.
    """
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise InstanceError("empty instance file")
    header = lines[0].split()
    if len(header) != 2:
        raise InstanceError(f"malformed header {lines[0]!r}: expected 'n m'")
    try:
        n, m = int(header[0]), int(header[1])
    except ValueError:
        raise InstanceError(f"malformed header {lines[0]!r}: expected two integers") from None
    if n < 1 or m < 1:
        raise InstanceError("job and machine counts must be positive")
    if len(lines) - 1 < n:
        raise InstanceError(f"expected {n} job rows, found {len(lines) - 1}")

    jobs = []
    for j in range(n):
        fields = lines[1 + j].split()
        if len(fields) != 2 * m:
            raise InstanceError(
                f"job row {j} has {len(fields)} fields, expected {2 * m}")
        ops = []
        for k in range(m):
            try:
                machine = int(fields[2 * k])
                duration = int(fields[2 * k + 1])
            except ValueError:
                raise InstanceError(f"job row {j}: non-integer field") from None
            if not 0 <= machine < m:
                raise InstanceError(
                    f"job row {j}: machine index {machine} out of range [0,{m})")
            if duration <= 0:
                raise InstanceError(f"job row {j}: nonpositive duration {duration}")
            preds = frozenset([k - 1]) if k > 0 else frozenset()
            ops.append(Operation(j, k, machine, float(duration), preds))
        jobs.append(Job(j, tuple(ops)))

    resources = tuple(
        Resource(machine_id=i, work_center=i, capabilities=frozenset([i]))
        for i in range(m))
    triplet = parse_triplet("Jm||C_max")
    return Instance(triplet=triplet, jobs=tuple(jobs), resources=resources)


# ---------------------------------------------------------------------------
# seeded generation


@dataclass(frozen=True)
class GenShape:
    n_jobs: int
    work_centers: int
    machines_per_wc: int = 1
    duration_range: tuple[int, int] = (1, 9)
    due_tightness: float = 1.5


_PARALLEL = {SetupKind.PM, SetupKind.QM, SetupKind.RM}
_FLEXIBLE = {SetupKind.FFC, SetupKind.FJC, SetupKind.FPOC}


def generate_instance(t: ProblemTriplet, shape: GenShape, seed: int) -> Instance:
    """Deterministic instance synthesis; equal arguments give identical output."""
    violations = notation.validate(t)
    if violations:
        raise InstanceError("triplet is not well-formed: " +
                            "; ".join(v.code for v in violations))
    kind = t.alpha.kind
    if shape.n_jobs < 1 or shape.work_centers < 1 or shape.machines_per_wc < 1:
        raise InstanceError("shape counts must be positive")
    if shape.machines_per_wc > 1 and kind not in (_PARALLEL | _FLEXIBLE):
        raise InstanceError(f"{kind.value} admits a single machine per work center")
    if kind in _PARALLEL | {SetupKind.SINGLE} and shape.work_centers != 1:
        raise InstanceError(f"{kind.value} is a single-stage setup")
    if kind is SetupKind.SINGLE and shape.machines_per_wc != 1:
        raise InstanceError("single-machine setup has exactly one machine")
    lo, hi = shape.duration_range
    if lo < 1 or hi < lo:
        raise InstanceError("duration range must satisfy 1 <= lo <= hi")

    rng = RngStream(seed, "instance-gen")
    tags = t.tags()

    n_wc = shape.work_centers
    jobs = _gen_jobs(kind, shape, tags, rng)
    resources = _gen_resources(kind, shape, jobs, tags, rng)

    # due dates from total work content
    dated = []
    for job in jobs:
        total = sum(op.base_duration for op in job.operations)
        due = job.release + shape.due_tightness * total
        dated.append(replace(job, due=due))
    jobs = dated

    setup_times = _gen_setups(t, jobs, resources, shape, rng)
    if Tag.FMLS in tags:
        n_fam = max(2, min(3, shape.n_jobs))
        jobs = [replace(j, family=rng.randrange(n_fam)) for j in jobs]
        # family assignment happened after matrix sizing; matrix covers n_fam
    transport = _gen_transport(t, resources, shape, rng)
    stochastic = _gen_stochastic(t, jobs, resources, shape, rng)

    inst = Instance(triplet=t, jobs=tuple(jobs), resources=tuple(resources),
                    transport=transport, stochastic=stochastic,
                    setup_times=setup_times)
    problems = validate_instance(inst)
    if problems:
        raise InstanceError("generator produced an inconsistent instance: " +
                            "; ".join(v.code for v in problems))
    return inst


def _gen_jobs(kind, shape, tags, rng) -> list[Job]:
    lo, hi = shape.duration_range
    n_wc = shape.work_centers
    flow_route = list(range(n_wc))
    jobs = []
    for j in range(shape.n_jobs):
        if kind in (_PARALLEL | {SetupKind.SINGLE}):
            route = [0]
        elif kind in (SetupKind.FM, SetupKind.FFC):
            route = list(flow_route)
        elif kind in (SetupKind.JM, SetupKind.FJC):
            route = list(flow_route)
            rng.shuffle(route)
        else:  # Om / POm / FPOc: per-job op set, precedence handled below
            route = list(flow_route)
            rng.shuffle(route)

        if Tag.VNOPS in tags:
            length = rng.randint(1, n_wc)
            route = route[:length]
        if Tag.RECRC in tags and len(route) >= 1:
            route.append(route[rng.randrange(len(route))])  # one revisit

        ops = []
        for idx, wc in enumerate(route):
            duration = float(rng.randint(lo, hi))
            if kind in (SetupKind.OM,):
                preds: frozenset[int] = frozenset()
            elif kind in (SetupKind.POM, SetupKind.FPOC):
                # sparse random DAG over the listed order
                preds = frozenset(p for p in range(idx) if rng.random() < 0.4)
            else:
                preds = frozenset([idx - 1]) if idx > 0 else frozenset()
            ops.append(Operation(j, idx, wc, duration, preds))
        release = 0.0
        jobs.append(Job(j, tuple(ops), release=release))
    return jobs


def _gen_resources(kind, shape, jobs, tags, rng) -> list[Resource]:
    resources = []
    mid = 0
    per_wc = shape.machines_per_wc
    for wc in range(shape.work_centers):
        for _ in range(per_wc):
            speed = 1.0
            speed_by_job = None
            if kind is SetupKind.QM:
                speed = 1.0 + 0.25 * rng.randrange(4)
            elif kind is SetupKind.RM:
                speed_by_job = tuple(
                    (j.job_id, 1.0 + 0.25 * rng.randrange(4)) for j in jobs)
            caps = {wc}
            resources.append(Resource(
                machine_id=mid, work_center=wc, speed=speed,
                speed_by_job=speed_by_job, capabilities=frozenset(caps)))
            mid += 1
    if Tag.M_I_O in tags and shape.work_centers > 1:
        # widen every machine by one foreign capability
        widened = []
        for r in resources:
            extra = rng.randrange(shape.work_centers)
            widened.append(replace(r, capabilities=r.capabilities | {extra}))
        resources = widened
    if Tag.BLOCK_IN in tags or Tag.BLOCK_OUT in tags:
        resources = [replace(
            r,
            input_buffer_capacity=2 if Tag.BLOCK_IN in tags else UNBOUNDED,
            output_buffer_capacity=1 if Tag.BLOCK_OUT in tags else UNBOUNDED,
        ) for r in resources]
    if Tag.BATCH in tags:
        resources = [replace(r, batch_spec=BatchSpec("fixed", 2, float(shape.duration_range[1])))
                     if r.work_center == 0 else r for r in resources]
    if Tag.DBATCH in tags:
        resources = [replace(r, batch_spec=BatchSpec("dynamic", 3))
                     if r.work_center == 0 else r for r in resources]
    return resources


def _gen_setups(t, jobs, resources, shape, rng) -> SetupTimes | None:
    tags = t.tags()
    lo, hi = shape.duration_range
    cap = max(1, hi // 2)
    n = len(jobs)
    if Tag.S_JKI in tags:
        tensor = tuple(
            tuple(tuple(0.0 if a == b else float(rng.randint(1, cap)) for b in range(n))
                  for a in range(n))
            for _ in resources)
        return SetupTimes("S_jki", tensor)
    if Tag.S_JK in tags:
        matrix = tuple(
            tuple(0.0 if a == b else float(rng.randint(1, cap)) for b in range(n))
            for a in range(n))
        return SetupTimes("S_jk", matrix)
    if Tag.FMLS in tags:
        n_fam = max(2, min(3, n))
        matrix = tuple(
            tuple(0.0 if a == b else float(rng.randint(1, cap)) for b in range(n_fam))
            for a in range(n_fam))
        return SetupTimes("fmls", matrix)
    return None


def _gen_transport(t, resources, shape, rng) -> TransportSpec:
    tags = t.tags()
    tr = t.constraint(Tag.TR_N)
    if tr is None and Tag.TR_INF not in tags:
        return TransportSpec()
    m = len(resources)
    travel = tuple(
        tuple(0.0 if a == b else float(rng.randint(1, max(1, shape.duration_range[0])))
              for b in range(m))
        for a in range(m))
    if Tag.TR_INF in tags:
        return TransportSpec(mode="infinite", travel=travel)
    return TransportSpec(mode="fleet", fleet_size=tr.param, travel=travel,
                         home=tuple(0 for _ in range(tr.param)))


def _gen_stochastic(t, jobs, resources, shape, rng) -> StochasticSpec:
    tags = t.tags()
    lo, hi = shape.duration_range
    mean_dur = 0.5 * (lo + hi)
    release = None
    if Tag.R_J_S in tags:
        span = 0.5 * shape.n_jobs * mean_dur
        release = tuple((j.job_id, Dist("uniform", 0.0, span)) for j in jobs)
    duration_factor = Dist("uniform", 0.8, 1.2) if Tag.P_JI_S in tags else None
    breakdowns = None
    if Tag.BRKDWN_S in tags:
        breakdowns = tuple(
            (r.machine_id,
             Dist("exponential", 1.0 / (10.0 * mean_dur)),
             Dist("uniform", 1.0, 2.0 * mean_dur))
            for r in resources)
    demand = Dist("exponential", 1.0 / mean_dur) if Tag.DMD_J_S in tags else None
    return StochasticSpec(release=release, duration_factor=duration_factor,
                          breakdowns=breakdowns, demand=demand)


# ---------------------------------------------------------------------------
# validation


def validate_instance(inst: Instance) -> list[Violation]:
    """Structural consistency checks; empty list means the instance is usable."""
    out: list[Violation] = []
    tags = inst.triplet.tags()
    n = inst.n_jobs
    m = inst.n_machines

    for job in inst.jobs:
        indices = {op.op_index for op in job.operations}
        if indices != set(range(len(job.operations))):
            out.append(Violation("op-index-gap",
                                 f"job {job.job_id} operation indices are not 0..k"))
            continue
        if not _acyclic(job):
            out.append(Violation("precedence-cycle",
                                 f"job {job.job_id} has cyclic precedence"))
        for op in job.operations:
            if any(p >= len(job.operations) or p < 0 for p in op.predecessors):
                out.append(Violation("dangling-predecessor",
                                     f"job {job.job_id} op {op.op_index} references a missing op"))

    for job in inst.jobs:
        for op in job.operations:
            if not inst.eligible_machines(op):
                out.append(Violation(
                    "uncoverable-operation",
                    f"no machine can process job {job.job_id} op {op.op_index} "
                    f"(type {op.op_type})"))

    st = inst.setup_times
    if st is not None:
        if st.kind == "S_jk":
            if len(st.matrix) != n or any(len(row) != n for row in st.matrix):
                out.append(Violation("setup-matrix-shape", "job setup matrix must be n x n"))
        elif st.kind == "S_jki":
            if len(st.matrix) != m:
                out.append(Violation("setup-tensor-shape",
                                     f"setup tensor has {len(st.matrix)} machine slices, needs {m}"))
            else:
                for sl in st.matrix:
                    if len(sl) != n or any(len(row) != n for row in sl):
                        out.append(Violation("setup-tensor-shape",
                                             "setup tensor slices must be n x n"))
                        break
    for st_kind, tag in (("fmls", Tag.FMLS), ("S_jk", Tag.S_JK), ("S_jki", Tag.S_JKI)):
        has_field = st is not None and st.kind == st_kind
        if has_field != (tag in tags):
            out.append(Violation("setup-tag-mismatch",
                                 f"{tag.value} tag and setup data must appear together"))

    tr = inst.transport
    if tr.mode == "none":
        if Tag.TR_N in tags or Tag.TR_INF in tags:
            out.append(Violation("transport-tag-mismatch",
                                 "transport tags need transport data"))
    else:
        if tr.mode == "fleet" and Tag.TR_N not in tags:
            out.append(Violation("transport-tag-mismatch", "fleet transport needs tr(n)"))
        if tr.mode == "infinite" and Tag.TR_INF not in tags:
            out.append(Violation("transport-tag-mismatch", "infinite transport needs tr(inf)"))
        if tr.travel is None or len(tr.travel) != m or any(len(row) != m for row in tr.travel):
            out.append(Violation("travel-matrix-shape",
                                 f"travel matrix must be {m} x {m}"))
        else:
            for i, row in enumerate(tr.travel):
                if row[i] != 0:
                    out.append(Violation("travel-matrix-diagonal",
                                         f"travel[{i}][{i}] must be zero"))
                if any(v < 0 for v in row):
                    out.append(Violation("travel-matrix-negative",
                                         f"travel row {i} has a negative entry"))
        if tr.mode == "fleet":
            fleet_tag = inst.triplet.constraint(Tag.TR_N)
            if fleet_tag is not None and fleet_tag.param != tr.fleet_size:
                out.append(Violation("fleet-size-mismatch",
                                     "tr(n) parameter disagrees with the fleet size"))

    sto = inst.stochastic
    for present, tag, code in (
            (sto.release is not None, Tag.R_J_S, "release-dist"),
            (sto.duration_factor is not None, Tag.P_JI_S, "duration-dist"),
            (sto.breakdowns is not None, Tag.BRKDWN_S, "breakdown-dist"),
            (sto.demand is not None, Tag.DMD_J_S, "demand-dist")):
        if present and tag not in tags:
            out.append(Violation(f"{code}-without-tag",
                                 f"stochastic data present but {tag.value} missing from constraints"))
        if tag in tags and not present:
            out.append(Violation(f"{code}-missing",
                                 f"{tag.value} tagged but no distribution given"))

    if Tag.FMLS in tags:
        n_fam = len(st.matrix) if st is not None and st.kind == "fmls" else 0
        for job in inst.jobs:
            if job.family is None:
                out.append(Violation("family-missing",
                                     f"job {job.job_id} has no family but fmls is tagged"))
            elif n_fam and job.family >= n_fam:
                out.append(Violation("family-out-of-range",
                                     f"job {job.job_id} family exceeds the setup matrix"))

    return out


def _acyclic(job: Job) -> bool:
    preds = {op.op_index: set(op.predecessors) for op in job.operations}
    done: set[int] = set()
    while len(done) < len(preds):
        ready = [k for k, p in preds.items() if k not in done and p <= done]
        if not ready:
            return False
        done.update(ready)
    return True


# ---------------------------------------------------------------------------
# classification of a concrete instance


def derive_triplet(inst: Instance) -> ProblemTriplet:
    """Most specific classification consistent with the instance structure.

    The objective is taken from the declared triplet; structure cannot
    witness it.
    """
    kind = _derive_alpha(inst)
    beta = _derive_beta(inst)
    return ProblemTriplet(SetupClass(kind), frozenset(beta), inst.triplet.gamma)


def _derive_alpha(inst) -> SetupKind:
    wcs = sorted({r.work_center for r in inst.resources})
    multi = any(len(inst.machines_in(wc)) > 1 for wc in wcs)

    if len(wcs) == 1 and all(len(j.operations) == 1 for j in inst.jobs):
        machines = inst.resources
        if len(machines) == 1:
            return SetupKind.SINGLE
        if any(r.speed_by_job for r in machines):
            return SetupKind.RM
        if len({r.speed for r in machines}) > 1:
            return SetupKind.QM
        return SetupKind.PM

    total_orders = all(_is_chain(j) for j in inst.jobs)
    empty_orders = all(not op.predecessors for j in inst.jobs for op in j.operations)
    routes = {tuple(op.op_type for op in j.operations) for j in inst.jobs}
    flow_like = total_orders and len(routes) == 1

    if flow_like:
        return SetupKind.FFC if multi else SetupKind.FM
    if total_orders:
        return SetupKind.FJC if multi else SetupKind.JM
    if empty_orders:
        return SetupKind.FPOC if multi else SetupKind.OM
    return SetupKind.FPOC if multi else SetupKind.POM


def _is_chain(job: Job) -> bool:
    for idx, op in enumerate(job.operations):
        want = frozenset([idx - 1]) if idx > 0 else frozenset()
        if op.predecessors != want:
            return False
    return True


def _derive_beta(inst) -> set[Constraint]:
    beta: set[Constraint] = set()
    declared = inst.triplet.tags()

    for job in inst.jobs:
        types = [op.op_type for op in job.operations]
        if len(types) != len(set(types)):
            beta.add(Constraint(Tag.RECRC))
    all_wcs = {r.work_center for r in inst.resources}
    if len(all_wcs) > 1:
        op_counts = {len(j.operations) for j in inst.jobs}
        missing_visit = any(
            {op.op_type for op in j.operations} != all_wcs for j in inst.jobs)
        if len(op_counts) > 1 or missing_visit:
            beta.add(Constraint(Tag.VNOPS))

    st = inst.setup_times
    if st is not None:
        beta.add(Constraint({"fmls": Tag.FMLS, "S_jk": Tag.S_JK, "S_jki": Tag.S_JKI}[st.kind]))
    for r in inst.resources:
        own = {r.work_center}
        if r.capabilities - own:
            beta.add(Constraint(Tag.M_I_O))
        if r.eligible_jobs is not None:
            beta.add(Constraint(Tag.M_I))
        if r.batch_spec is not None:
            beta.add(Constraint(Tag.DBATCH if r.batch_spec.kind == "dynamic" else Tag.BATCH))
        if r.input_buffer_capacity is not UNBOUNDED:
            beta.add(Constraint(Tag.BLOCK_IN))
        if r.output_buffer_capacity is not UNBOUNDED:
            beta.add(Constraint(Tag.BLOCK_OUT))

    if any(j.release > 0 for j in inst.jobs):
        beta.add(Constraint(Tag.R_J))
    sto = inst.stochastic
    if sto.release is not None:
        beta.discard(Constraint(Tag.R_J))
        beta.add(Constraint(Tag.R_J_S))
    if sto.duration_factor is not None:
        beta.add(Constraint(Tag.P_JI_S))
    if sto.breakdowns is not None:
        beta.add(Constraint(Tag.BRKDWN_S))
    if sto.demand is not None:
        beta.add(Constraint(Tag.DMD_J_S))
    if any(ev.kind.startswith("breakdown") for ev in inst.scripted_events):
        if Constraint(Tag.BRKDWN_S) not in beta:
            beta.add(Constraint(Tag.BRKDWN))
    if any(ev.kind == "demand_arrival" for ev in inst.scripted_events):
        if Constraint(Tag.DMD_J_S) not in beta:
            beta.add(Constraint(Tag.DMD_J))
    if any(ev.kind == "capacity_add" for ev in inst.scripted_events):
        beta.add(Constraint(Tag.FRES))

    tr = inst.transport
    if tr.mode == "infinite":
        beta.add(Constraint(Tag.TR_INF))
    elif tr.mode == "fleet":
        beta.add(Constraint(Tag.TR_N, tr.fleet_size))

    # declared-only tags that structure cannot witness
    for tag in (Tag.NWT, Tag.PRMP, Tag.PRMU, Tag.PREC, Tag.DMD_J):
        if tag in declared:
            beta.add(Constraint(tag))
    return beta


# ---------------------------------------------------------------------------
# JSON serialization


def instance_to_dict(inst: Instance) -> dict:
    def dist(d: Dist | None):
        return None if d is None else d.to_dict()

    return {
        "schema_version": SCHEMA_VERSION,
        "triplet": notation.render_triplet(inst.triplet),
        "jobs": [
            {
                "job_id": j.job_id,
                "release": j.release,
                "due": j.due,
                "family": j.family,
                "operations": [
                    {
                        "op_index": o.op_index,
                        "op_type": o.op_type,
                        "duration": o.base_duration,
                        "predecessors": sorted(o.predecessors),
                    }
                    for o in j.operations
                ],
            }
            for j in inst.jobs
        ],
        "resources": [
            {
                "machine_id": r.machine_id,
                "work_center": r.work_center,
                "speed": r.speed,
                "speed_by_job": [[jid, v] for jid, v in r.speed_by_job] if r.speed_by_job else None,
                "capabilities": sorted(r.capabilities),
                "input_buffer_capacity": r.input_buffer_capacity,
                "output_buffer_capacity": r.output_buffer_capacity,
                "batch_spec": None if r.batch_spec is None else {
                    "kind": r.batch_spec.kind, "size": r.batch_spec.size,
                    "duration": r.batch_spec.duration},
                "eligible_jobs": sorted(r.eligible_jobs) if r.eligible_jobs is not None else None,
                "setup_matrix_ref": r.setup_matrix_ref,
            }
            for r in inst.resources
        ],
        "transport": {
            "mode": inst.transport.mode,
            "fleet_size": inst.transport.fleet_size,
            "travel": [list(row) for row in inst.transport.travel] if inst.transport.travel else None,
            "home": list(inst.transport.home) if inst.transport.home else None,
        },
        "stochastic": {
            "release": [[jid, d.to_dict()] for jid, d in inst.stochastic.release]
            if inst.stochastic.release else None,
            "duration_factor": dist(inst.stochastic.duration_factor),
            "breakdowns": [[mid, f.to_dict(), r.to_dict()]
                           for mid, f, r in inst.stochastic.breakdowns]
            if inst.stochastic.breakdowns else None,
            "demand": dist(inst.stochastic.demand),
        },
        "setup_times": None if inst.setup_times is None else {
            "kind": inst.setup_times.kind,
            "matrix": _nested_list(inst.setup_times.matrix),
        },
        "scripted_events": [
            {"time": e.time, "kind": e.kind, "payload": e.payload}
            for e in inst.scripted_events
        ],
    }


def _nested_list(x):
    if isinstance(x, tuple):
        return [_nested_list(v) for v in x]
    return x


def _nested_tuple(x):
    if isinstance(x, list):
        return tuple(_nested_tuple(v) for v in x)
    return x


def instance_from_dict(d: dict) -> Instance:
    version = d.get("schema_version")
    if version != SCHEMA_VERSION:
        raise InstanceError(f"unsupported schema version {version!r}")
    triplet = parse_triplet(d["triplet"])
    jobs = tuple(
        Job(
            job_id=jd["job_id"],
            release=jd.get("release", 0.0),
            due=jd.get("due"),
            family=jd.get("family"),
            operations=tuple(
                Operation(jd["job_id"], od["op_index"], od["op_type"],
                          od["duration"], frozenset(od.get("predecessors", [])))
                for od in jd["operations"]
            ),
        )
        for jd in d["jobs"]
    )
    resources = tuple(
        Resource(
            machine_id=rd["machine_id"],
            work_center=rd["work_center"],
            speed=rd.get("speed", 1.0),
            speed_by_job=tuple((jid, v) for jid, v in rd["speed_by_job"])
            if rd.get("speed_by_job") else None,
            capabilities=frozenset(rd["capabilities"]),
            input_buffer_capacity=rd.get("input_buffer_capacity"),
            output_buffer_capacity=rd.get("output_buffer_capacity"),
            batch_spec=BatchSpec(**rd["batch_spec"]) if rd.get("batch_spec") else None,
            eligible_jobs=frozenset(rd["eligible_jobs"])
            if rd.get("eligible_jobs") is not None else None,
            setup_matrix_ref=rd.get("setup_matrix_ref"),
        )
        for rd in d["resources"]
    )
    td = d.get("transport") or {}
    transport = TransportSpec(
        mode=td.get("mode", "none"),
        fleet_size=td.get("fleet_size", 0),
        travel=_nested_tuple(td["travel"]) if td.get("travel") else None,
        home=tuple(td["home"]) if td.get("home") else None,
    )
    sd = d.get("stochastic") or {}
    stochastic = StochasticSpec(
        release=tuple((jid, Dist.from_dict(dd)) for jid, dd in sd["release"])
        if sd.get("release") else None,
        duration_factor=Dist.from_dict(sd["duration_factor"])
        if sd.get("duration_factor") else None,
        breakdowns=tuple((mid, Dist.from_dict(fd), Dist.from_dict(rd))
                         for mid, fd, rd in sd["breakdowns"])
        if sd.get("breakdowns") else None,
        demand=Dist.from_dict(sd["demand"]) if sd.get("demand") else None,
    )
    std = d.get("setup_times")
    setup_times = SetupTimes(std["kind"], _nested_tuple(std["matrix"])) if std else None
    scripted = tuple(ScriptedEvent(e["time"], e["kind"], e.get("payload", -1))
                     for e in d.get("scripted_events", []))
    return Instance(triplet=triplet, jobs=jobs, resources=resources,
                    transport=transport, stochastic=stochastic,
                    setup_times=setup_times, scripted_events=scripted)


def serialize_instance(inst: Instance) -> str:
    """Canonical JSON text; byte-identical for equal instances."""
    return json.dumps(instance_to_dict(inst), sort_keys=True, separators=(",", ":"))


def deserialize_instance(text: str) -> Instance:
    return instance_from_dict(json.loads(text))
