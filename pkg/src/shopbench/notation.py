"""Three-field classification of scheduling problems.

A problem is written as ``setup|constraints|objective``, for example
``FJc|S_jki,brkdwn^s|T_ave``. The constraint field may be empty. Stochastic
variants carry a ``^s`` suffix and parameters go in parentheses, so the
whole language stays plain ASCII. The full grammar ships in
``docs/grammar.ebnf``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

from .errors import NotationError


class SetupKind(enum.Enum):
    SINGLE = "1"
    PM = "Pm"
    QM = "Qm"
    RM = "Rm"
    FM = "Fm"
    JM = "Jm"
    OM = "Om"
    POM = "POm"
    FFC = "FFc"
    FJC = "FJc"
    FPOC = "FPOc"


# general -> directly-subsumed specialisations
_SETUP_CHILDREN = {
    SetupKind.PM: (SetupKind.SINGLE,),
    SetupKind.QM: (SetupKind.PM,),
    SetupKind.RM: (SetupKind.QM,),
    SetupKind.JM: (SetupKind.FM,),
    SetupKind.POM: (SetupKind.JM,),
    SetupKind.OM: (SetupKind.POM,),
    SetupKind.FFC: (SetupKind.FM,),
    SetupKind.FJC: (SetupKind.JM, SetupKind.FFC),
    SetupKind.FPOC: (SetupKind.POM, SetupKind.FJC),
}

_ROUTING_FLEXIBLE = {
    SetupKind.PM,
    SetupKind.QM,
    SetupKind.RM,
    SetupKind.OM,
    SetupKind.POM,
    SetupKind.FFC,
    SetupKind.FJC,
    SetupKind.FPOC,
}


@dataclass(frozen=True)
class SetupClass:
    """Machine setup, optionally with a machine / work-center count."""

    kind: SetupKind
    count: int | None = None

    def __post_init__(self):
        if self.count is not None and self.count < 1:
            raise NotationError(f"setup count must be >= 1, got {self.count}")
        if self.kind is SetupKind.SINGLE and self.count not in (None, 1):
            raise NotationError("single-machine setup has an implicit count of 1")

    @property
    def effective_count(self) -> int | None:
        if self.kind is SetupKind.SINGLE:
            return 1
        return self.count

    def render(self) -> str:
        if self.kind is SetupKind.SINGLE:
            return "1"
        if self.count is None:
            return self.kind.value
        return f"{self.kind.value}({self.count})"


class Tag(enum.Enum):
    BLOCK_IN = "block_in"
    BLOCK_OUT = "block_out"
    RECRC = "recrc"
    VNOPS = "vnops"
    FMLS = "fmls"
    S_JK = "S_jk"
    S_JKI = "S_jki"
    M_I = "M_i"
    M_I_O = "M_i^o"
    BATCH = "batch"
    DBATCH = "dbatch"
    FRES = "fres"
    R_J = "r_j"
    R_J_S = "r_j^s"
    BRKDWN = "brkdwn"
    BRKDWN_S = "brkdwn^s"
    DMD_J = "dmd_j"
    DMD_J_S = "dmd_j^s"
    P_JI_S = "p_ji^s"
    TR_INF = "tr(inf)"
    TR_N = "tr"  # rendered as tr(<fleet size>)
    NWT = "nwt"
    PRMP = "prmp"
    PRMU = "prmu"
    PREC = "prec"


_EXCLUSIVE_PAIRS = (
    (Tag.R_J, Tag.R_J_S),
    (Tag.BRKDWN, Tag.BRKDWN_S),
    (Tag.DMD_J, Tag.DMD_J_S),
    (Tag.TR_INF, Tag.TR_N),
    (Tag.BATCH, Tag.DBATCH),
)


@dataclass(frozen=True)
class Constraint:
    """A beta-field tag; only the transport-fleet tag carries a parameter."""

    tag: Tag
    param: int | None = None

    def __post_init__(self):
        if self.tag is Tag.TR_N:
            if self.param is None or self.param < 1:
                raise NotationError("tr(n) requires a fleet size >= 1")
        elif self.param is not None:
            raise NotationError(f"{self.tag.value} does not take a parameter")

    def render(self) -> str:
        if self.tag is Tag.TR_N:
            return f"tr({self.param})"
        return self.tag.value


class MetricId(enum.Enum):
    MAKESPAN = "C"
    THROUGHPUT_JOBS = "Tpt_j"
    THROUGHPUT_OPS = "Tpt_o"
    FLOW = "F"
    IDLE_JOB = "I"
    LATENESS = "L"
    TARDINESS = "T"
    UNIT_COST = "U"
    EARLINESS = "E"
    UTILIZATION_MACHINE = "Utl"
    UTILIZATION_TRANSPORT = "Utl_tr"
    BUFFER_LENGTH = "Bf"
    BUFFERED_TIME = "Bf_time"
    SETUP_TIME_TOTAL = "Setup"
    INVENTORY_LEVEL = "Inv"


class Aggregation(enum.Enum):
    AVE = "ave"
    MAX = "max"
    SUM = "sum"
    COUNT = "count"


# per-job metrics take the `sum_X_j` / `count_X_j` spelled forms
_JOB_METRICS = {
    MetricId.FLOW,
    MetricId.IDLE_JOB,
    MetricId.LATENESS,
    MetricId.TARDINESS,
    MetricId.UNIT_COST,
    MetricId.EARLINESS,
}

_DEFAULT_AGG = {MetricId.MAKESPAN: Aggregation.MAX}  # everything else: ave


@dataclass(frozen=True)
class SingleObjective:
    metric: MetricId
    aggregation: Aggregation

    def render(self) -> str:
        tok = self.metric.value
        if self.metric is MetricId.MAKESPAN and self.aggregation is Aggregation.MAX:
            return "C_max"
        if self.aggregation is Aggregation.AVE:
            return f"{tok}_ave"
        if self.aggregation is Aggregation.MAX:
            return f"max_{tok}"
        suffix = "_j" if self.metric in _JOB_METRICS else ""
        return f"{self.aggregation.value}_{tok}{suffix}"


@dataclass(frozen=True)
class ScalarizedObjective:
    terms: tuple[tuple[float, SingleObjective], ...]

    def render(self) -> str:
        return "+".join(f"{_fmt_weight(w)}*{m.render()}" for w, m in self.terms)


@dataclass(frozen=True)
class ParetoObjective:
    members: tuple[SingleObjective, ...]

    def render(self) -> str:
        return "pareto(" + ",".join(m.render() for m in self.members) + ")"


ObjectiveSpec = SingleObjective | ScalarizedObjective | ParetoObjective


def _fmt_weight(w: float) -> str:
    return repr(float(w))


@dataclass(frozen=True)
class ProblemTriplet:
    alpha: SetupClass
    beta: frozenset[Constraint]
    gamma: ObjectiveSpec

    def tags(self) -> set[Tag]:
        return {c.tag for c in self.beta}

    def constraint(self, tag: Tag) -> Constraint | None:
        for c in self.beta:
            if c.tag is tag:
                return c
        return None

    def render(self) -> str:
        return render_triplet(self)


@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    span: tuple[int, int] | None = None

    def to_dict(self) -> dict:
        return {"code": self.code, "message": self.message, "span": self.span}


# ---------------------------------------------------------------------------
# parsing


_TAG_BY_TOKEN = {t.value: t for t in Tag if t is not Tag.TR_N}


def _parse_alpha(text: str, offset: int) -> SetupClass:
    tok = text.strip()
    if not tok:
        raise NotationError("empty machine-setup field", position=offset,
                            expected=[k.value for k in SetupKind])
    count = None
    if tok.endswith(")") and "(" in tok:
        base, _, inner = tok.partition("(")
        inner = inner[:-1]
        if not inner.isdigit():
            raise NotationError(f"setup count must be a positive integer, got {inner!r}",
                                position=offset + len(base) + 1)
        count = int(inner)
        tok = base
    for kind in SetupKind:
        if tok == kind.value:
            if count is not None and count < 1:
                raise NotationError("setup count must be >= 1", position=offset)
            return SetupClass(kind, count)
    raise NotationError(f"unknown machine setup {tok!r}", position=offset,
                        expected=[k.value for k in SetupKind])


def _parse_beta(text: str, offset: int) -> frozenset[Constraint]:
    text = text.strip()
    if not text:
        return frozenset()
    out: list[Constraint] = []
    pos = offset
    for raw in text.split(","):
        tok = raw.strip()
        if not tok:
            raise NotationError("empty constraint tag", position=pos)
        if tok.startswith("tr(") and tok.endswith(")"):
            inner = tok[3:-1]
            if inner == "inf":
                out.append(Constraint(Tag.TR_INF))
            elif inner.isdigit() and int(inner) >= 1:
                out.append(Constraint(Tag.TR_N, int(inner)))
            else:
                raise NotationError(f"transport fleet size must be a positive integer or 'inf', got {inner!r}",
                                    position=pos)
        elif tok in _TAG_BY_TOKEN:
            out.append(Constraint(_TAG_BY_TOKEN[tok]))
        else:
            raise NotationError(f"unknown constraint tag {tok!r}", position=pos,
                                expected=sorted(_TAG_BY_TOKEN) + ["tr(n)", "tr(inf)"])
        pos += len(raw) + 1
    tags = [c.tag for c in out]
    for tag in tags:
        if tags.count(tag) > 1:
            raise NotationError(f"duplicate constraint tag {tag.value!r}", position=offset)
    present = set(tags)
    for a, b in _EXCLUSIVE_PAIRS:
        if a in present and b in present:
            raise NotationError(
                f"mutually exclusive tags {a.value!r} and {b.value!r} both present",
                position=offset)
    return frozenset(out)


# longest tokens first so suffix stripping cannot split a metric name
_METRIC_TOKENS = sorted((m.value, m) for m in MetricId)
_METRIC_TOKENS.sort(key=lambda pair: -len(pair[0]))


def _match_metric(tok: str) -> MetricId | None:
    for text, metric in _METRIC_TOKENS:
        if tok == text:
            return metric
    return None


def _parse_single(tok: str, offset: int) -> SingleObjective:
    tok = tok.strip()
    if not tok:
        raise NotationError("empty objective term", position=offset)
    if tok == "C_max":
        return SingleObjective(MetricId.MAKESPAN, Aggregation.MAX)
    for prefix, agg in (("sum_", Aggregation.SUM), ("count_", Aggregation.COUNT),
                        ("max_", Aggregation.MAX), ("ave_", Aggregation.AVE)):
        if tok.startswith(prefix):
            body = tok[len(prefix):]
            metric = _match_metric(body) or _match_metric(body.removesuffix("_j"))
            if metric is not None:
                return SingleObjective(metric, agg)
    for suffix, agg in (("_ave", Aggregation.AVE), ("_max", Aggregation.MAX),
                        ("_sum", Aggregation.SUM)):
        if tok.endswith(suffix):
            metric = _match_metric(tok[: -len(suffix)])
            if metric is not None:
                return SingleObjective(metric, agg)
    metric = _match_metric(tok)
    if metric is not None:
        return SingleObjective(metric, _DEFAULT_AGG.get(metric, Aggregation.AVE))
    raise NotationError(f"unknown objective {tok!r}", position=offset,
                        expected=[m.value for m in MetricId])


def _parse_gamma(text: str, offset: int) -> ObjectiveSpec:
    text = text.strip()
    if not text:
        raise NotationError("empty objective field", position=offset)
    if text.startswith("pareto(") and text.endswith(")"):
        inner = text[len("pareto("):-1]
        members = tuple(_parse_single(part, offset) for part in inner.split(","))
        if len(members) < 2:
            raise NotationError("a pareto objective needs at least two members", position=offset)
        return ParetoObjective(members)
    if "*" in text:
        terms = []
        for part in text.split("+"):
            if "*" not in part:
                raise NotationError(f"scalarized term {part.strip()!r} needs the form weight*metric",
                                    position=offset)
            w_text, _, m_text = part.partition("*")
            try:
                weight = float(w_text.strip())
            except ValueError:
                raise NotationError(f"bad weight {w_text.strip()!r}", position=offset) from None
            terms.append((weight, _parse_single(m_text, offset)))
        return ScalarizedObjective(tuple(terms))
    return _parse_single(text, offset)


def parse_triplet(text: str) -> ProblemTriplet:
    """Parse ``alpha|beta|gamma`` text into a structured triplet."""
    parts = text.split("|")
    if len(parts) != 3:
        raise NotationError(
            f"expected exactly three '|'-separated fields, got {len(parts)}",
            position=0, expected=["setup|constraints|objective"])
    a_off = 0
    b_off = len(parts[0]) + 1
    g_off = b_off + len(parts[1]) + 1
    alpha = _parse_alpha(parts[0], a_off)
    beta = _parse_beta(parts[1], b_off)
    gamma = _parse_gamma(parts[2], g_off)
    return ProblemTriplet(alpha, beta, gamma)


def render_triplet(t: ProblemTriplet) -> str:
    """Canonical text; re-parsing always reproduces the triplet."""
    beta = ",".join(sorted(c.render() for c in t.beta))
    return f"{t.alpha.render()}|{beta}|{t.gamma.render()}"


# ---------------------------------------------------------------------------
# semantics


def subsumes(general: SetupClass | SetupKind, specific: SetupClass | SetupKind) -> bool:
    """True iff `specific` is reachable descending from `general` (reflexive).

    Count parameters are ignored; the relation is over setup kinds.
    """
    g = general.kind if isinstance(general, SetupClass) else general
    s = specific.kind if isinstance(specific, SetupClass) else specific
    seen = {g}
    frontier = [g]
    while frontier:
        node = frontier.pop()
        if node is s:
            return True
        for child in _SETUP_CHILDREN.get(node, ()):
            if child not in seen:
                seen.add(child)
                frontier.append(child)
    return False


def has_routing_flexibility(t: ProblemTriplet) -> bool:
    """True when machine choice is part of the problem, not only sequencing."""
    return t.alpha.kind in _ROUTING_FLEXIBLE


def _gamma_metrics(gamma: ObjectiveSpec):
    if isinstance(gamma, SingleObjective):
        return [gamma]
    if isinstance(gamma, ScalarizedObjective):
        return [m for _, m in gamma.terms]
    return list(gamma.members)


def validate(t: ProblemTriplet) -> list[Violation]:
    """Consistency rules over a triplet; empty list means well-formed."""
    out: list[Violation] = []
    tags = t.tags()

    seen: dict[Tag, int] = {}
    for c in t.beta:
        seen[c.tag] = seen.get(c.tag, 0) + 1
    for tag, n in sorted(seen.items(), key=lambda kv: kv[0].value):
        if n > 1:
            out.append(Violation("duplicate-tag", f"tag {tag.value} appears {n} times"))

    for a, b in _EXCLUSIVE_PAIRS:
        if a in tags and b in tags:
            out.append(Violation(
                "mutually-exclusive-tags",
                f"{a.value} and {b.value} cannot be combined"))

    if Tag.PRMU in tags and t.alpha.kind is not SetupKind.FM:
        out.append(Violation("prmu-requires-flow-shop",
                             "permutation sequencing only applies to flow shops"))

    # Finite-buffer blocking needs either routing flexibility or the classic
    # flow-shop stage-buffer reading, where blocking originated.
    blocking_ok = has_routing_flexibility(t) or t.alpha.kind is SetupKind.FM
    for tag, code in ((Tag.BLOCK_IN, "block_in-requires-routing-flexibility"),
                      (Tag.BLOCK_OUT, "block_out-requires-routing-flexibility")):
        if tag in tags and not blocking_ok:
            out.append(Violation(code, f"{tag.value} needs routing flexibility or a flow shop"))

    if (Tag.DMD_J in tags or Tag.DMD_J_S in tags) and Tag.R_J_S in tags:
        out.append(Violation("dmd-excludes-stochastic-release",
                             "demand-driven systems choose release dates internally; "
                             "stochastic releases cannot also be imposed"))

    tr = t.constraint(Tag.TR_N)
    if tr is not None and (tr.param is None or tr.param < 1):
        out.append(Violation("transport-fleet-size", "tr(n) needs a fleet size >= 1"))

    metrics = _gamma_metrics(t.gamma)
    if any(m.metric is MetricId.UTILIZATION_TRANSPORT for m in metrics):
        if Tag.TR_N not in tags and Tag.TR_INF not in tags:
            out.append(Violation("transport-metric-without-transport",
                                 "transport utilization needs tr(n) or tr(inf)"))

    if isinstance(t.gamma, ScalarizedObjective):
        weights = [w for w, _ in t.gamma.terms]
        if not all(math.isfinite(w) for w in weights):
            out.append(Violation("scalarized-weight-not-finite", "weights must be finite"))
        if not any(w != 0 for w in weights):
            out.append(Violation("scalarized-all-zero", "at least one weight must be nonzero"))
    if isinstance(t.gamma, ParetoObjective) and len(t.gamma.members) < 2:
        out.append(Violation("pareto-too-small", "a pareto objective needs >= 2 members"))

    return out
