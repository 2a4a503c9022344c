"""Built-in benchmark scenarios and the plain-text scenario format.

A scenario file has four sections; blank lines and ``#`` comments are
ignored::

    [sim]
    name = scenario1
    T_sim = 100
    Ts = 1
    load_mode = level

    [areas]
    # id  H   R_speed  D_load  T_t   T_g  theta_max  u_max
    1     12  0.05     0.7     0.65  0.1  0.1        0.5

    [ties]
    # i  j  P
    1    2  4

    [events]
    # time  area  value
    5       1     0.15

``load_mode`` is ``level`` (the area's load is set to ``value``) or
``increment`` (``value`` is added). Times are sample indices.
"""

from __future__ import annotations

import numpy as np

from .closed_loop import LOAD_MODES, LoadEvent, ScenarioSpec
from .exceptions import AgcBenchError, ParameterError, ScenarioParseError, TopologyError
from .network import AreaParameters, NetworkTopology, TieLine, remove_area

AREA_TABLE = {
    1: AreaParameters(1, H=12.0, R_speed=0.05, D_load=0.7, T_t=0.65, T_g=0.1, theta_max=0.1, u_max=0.5),
    2: AreaParameters(2, H=10.0, R_speed=0.0625, D_load=0.9, T_t=0.4, T_g=0.1, theta_max=0.1, u_max=0.65),
    3: AreaParameters(3, H=8.0, R_speed=0.08, D_load=0.9, T_t=0.3, T_g=0.1, theta_max=0.1, u_max=0.65),
    4: AreaParameters(4, H=8.0, R_speed=0.08, D_load=0.7, T_t=0.6, T_g=0.1, theta_max=0.1, u_max=0.55),
    5: AreaParameters(5, H=10.0, R_speed=0.05, D_load=0.86, T_t=0.8, T_g=0.15, theta_max=0.1, u_max=0.5),
}
TIE_SLOPES = {(1, 2): 4.0, (2, 3): 2.0, (3, 4): 2.0, (4, 5): 3.0, (2, 5): 3.0}

_EVENTS = {
    1: [(5, 1, 0.15), (15, 2, -0.15), (20, 3, 0.12), (40, 3, -0.12), (40, 4, 0.28)],
    2: [
        (5, 1, 0.10), (15, 2, -0.16), (20, 1, -0.22), (20, 2, 0.12),
        (20, 3, -0.10), (30, 3, 0.10), (40, 4, 0.08), (40, 5, -0.10),
    ],
    3: [(5, 1, 0.12), (15, 2, -0.15), (20, 5, 0.20), (40, 2, 0.15), (40, 3, 0.13), (40, 5, -0.20)],
}

# benchmark values of eta and phi, keyed by (scenario, scheme, variant)
REFERENCE_ETA = {}
REFERENCE_PHI = {}
for _s, _eta, _phi in (
    (1, {"D": 0.0249, "Dss": 0.0249}, {"full": (0.0030, 0.0029), "diag": (0.0030, 0.0029), "zero": (0.0030, 0.0028)}),
    (2, {"D": 0.0346, "Dss": 0.0347}, {"full": (0.0063, 0.0060), "diag": (0.0063, 0.0061), "zero": (0.0063, 0.0059)}),
    (3, {"D": 0.0510, "Dss": 0.0511}, {"full": (0.0060, 0.0058), "diag": (0.0060, 0.0058), "zero": (0.0059, 0.0058)}),
):
    for _v, (_pd, _pdss) in _phi.items():
        REFERENCE_ETA[(_s, "D", _v)] = _eta["D"]
        REFERENCE_ETA[(_s, "Dss", _v)] = _eta["Dss"]
        REFERENCE_PHI[(_s, "D", _v)] = _pd
        REFERENCE_PHI[(_s, "Dss", _v)] = _pdss


def builtin_topology(scenario_id):
    chain = NetworkTopology(
        areas=tuple(AREA_TABLE[i] for i in (1, 2, 3, 4)),
        ties=tuple(TieLine(i, j, TIE_SLOPES[(i, j)]) for (i, j) in ((1, 2), (2, 3), (3, 4))),
    )
    if scenario_id == 1:
        return chain
    five = NetworkTopology(
        areas=chain.areas + (AREA_TABLE[5],),
        ties=chain.ties + (TieLine(4, 5, TIE_SLOPES[(4, 5)]), TieLine(2, 5, TIE_SLOPES[(2, 5)])),
    )
    if scenario_id == 2:
        return five
    if scenario_id == 3:
        return remove_area(five, 4)
    raise KeyError(f"unknown built-in scenario {scenario_id!r}; expected 1, 2 or 3")


def builtin_scenario(scenario_id, T_sim=100, Ts=1.0) -> ScenarioSpec:
    scenario_id = int(scenario_id)
    topology = builtin_topology(scenario_id)
    return ScenarioSpec(
        name=f"scenario{scenario_id}",
        topology=topology,
        events=tuple(LoadEvent(*e) for e in _EVENTS[scenario_id]),
        T_sim=T_sim,
        Ts=Ts,
        load_mode="level",
    )


_AREA_FIELDS = ("area_id", "H", "R_speed", "D_load", "T_t", "T_g", "theta_max", "u_max")
_SECTIONS = ("sim", "areas", "ties", "events")


def _number(tok, lineno, field, kind=float):
    try:
        if kind is int:
            v = float(tok)
            if not np.isfinite(v) or v != int(v):
                raise ValueError
            return int(v)
        v = float(tok)
        if not np.isfinite(v):
            raise ValueError
        return v
    except ValueError:
        raise ScenarioParseError(f"field {field!r}: cannot read {tok!r} as {kind.__name__}", line=lineno, field=field) from None


def parse_scenario_file(text: str) -> ScenarioSpec:
    sections = {s: [] for s in _SECTIONS}
    current = None
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ScenarioParseError(f"malformed section header {line!r}", line=lineno)
            name = line[1:-1].strip().lower()
            if name not in sections:
                raise ScenarioParseError(f"unknown section [{name}]", line=lineno)
            if name in seen:
                raise ScenarioParseError(f"duplicate section [{name}]", line=lineno)
            seen.add(name)
            current = name
            continue
        if current is None:
            raise ScenarioParseError("content before the first section header", line=lineno)
        sections[current].append((lineno, line))

    sim = {"name": "scenario", "T_sim": "100", "Ts": "1", "load_mode": "level"}
    sim_lines = {}
    for lineno, line in sections["sim"]:
        if "=" not in line:
            raise ScenarioParseError("expected 'key = value' in [sim]", line=lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in sim:
            raise ScenarioParseError(f"unknown [sim] key {key!r}", line=lineno, field=key)
        sim[key] = value
        sim_lines[key] = lineno
    T_sim = _number(sim["T_sim"], sim_lines.get("T_sim"), "T_sim", int)
    Ts = _number(sim["Ts"], sim_lines.get("Ts"), "Ts")
    if sim["load_mode"] not in LOAD_MODES:
        raise ScenarioParseError(
            f"load_mode must be one of {LOAD_MODES}", line=sim_lines.get("load_mode"), field="load_mode"
        )

    areas = []
    for lineno, line in sections["areas"]:
        toks = line.split()
        if len(toks) != len(_AREA_FIELDS):
            raise ScenarioParseError(
                f"area rows need {len(_AREA_FIELDS)} fields {_AREA_FIELDS}, got {len(toks)}", line=lineno
            )
        vals = [_number(toks[0], lineno, "area_id", int)]
        vals += [_number(t, lineno, f) for t, f in zip(toks[1:], _AREA_FIELDS[1:])]
        try:
            areas.append(AreaParameters(*vals))
        except ParameterError as exc:
            raise ScenarioParseError(str(exc), line=lineno, field=exc.field) from exc
    if not areas:
        raise ScenarioParseError("scenario defines no areas")

    ties = []
    for lineno, line in sections["ties"]:
        toks = line.split()
        if len(toks) != 3:
            raise ScenarioParseError("tie rows need 3 fields (i, j, P)", line=lineno)
        i = _number(toks[0], lineno, "i", int)
        j = _number(toks[1], lineno, "j", int)
        P = _number(toks[2], lineno, "P")
        try:
            ties.append(TieLine(i, j, P))
        except AgcBenchError as exc:
            raise ScenarioParseError(str(exc), line=lineno, field="P") from exc
    ids = {a.area_id for a in areas}
    for (lineno, _), tie in zip(sections["ties"], ties):
        for end in (tie.i, tie.j):
            if end not in ids:
                raise ScenarioParseError(
                    f"tie-line ({tie.i}, {tie.j}) references unknown area {end}", line=lineno, field="tie"
                )

    events = []
    for lineno, line in sections["events"]:
        toks = line.split()
        if len(toks) != 3:
            raise ScenarioParseError("event rows need 3 fields (time, area, value)", line=lineno)
        t = _number(toks[0], lineno, "time", int)
        a = _number(toks[1], lineno, "area", int)
        v = _number(toks[2], lineno, "value")
        if a not in ids:
            raise ScenarioParseError(f"event references unknown area {a}", line=lineno, field="area")
        try:
            events.append(LoadEvent(t, a, v))
        except ValueError as exc:
            raise ScenarioParseError(str(exc), line=lineno, field="time") from exc

    try:
        topology = NetworkTopology(areas=tuple(areas), ties=tuple(ties))
        return ScenarioSpec(
            name=sim["name"], topology=topology, events=tuple(events),
            T_sim=T_sim, Ts=Ts, load_mode=sim["load_mode"],
        )
    except (TopologyError, ValueError) as exc:
        raise ScenarioParseError(str(exc)) from exc


def _fmt(x):
    return repr(float(x))


def serialize_scenario(spec: ScenarioSpec) -> str:
    lines = [
        "[sim]",
        f"name = {spec.name}",
        f"T_sim = {spec.T_sim}",
        f"Ts = {_fmt(spec.Ts)}",
        f"load_mode = {spec.load_mode}",
        "",
        "[areas]",
        "# " + "  ".join(_AREA_FIELDS),
    ]
    for a in spec.topology.areas:
        lines.append(
            " ".join([str(a.area_id)] + [_fmt(getattr(a, f)) for f in _AREA_FIELDS[1:]])
        )
    lines += ["", "[ties]", "# i  j  P"]
    lines += [f"{t.i} {t.j} {_fmt(t.P)}" for t in spec.topology.ties]
    lines += ["", "[events]", "# time  area  value"]
    lines += [f"{e.time} {e.area} {_fmt(e.value)}" for e in spec.events]
    return "\n".join(lines) + "\n"
