"""JSON encoding of matrices, sets, assemblages, scenarios and results.

Floats are written with Python's shortest round-trip ``repr``, so decoding
an encoded matrix reproduces it bit for bit.  Decoders raise
:class:`~purikit.errors.ParseError` with a JSON pointer to the offending
location.
"""

from __future__ import annotations

import json
from typing import Any

import numpy as np

from .assemblages import Assemblage
from .errors import ParseError, PurikitError
from .linalg import Factor, SpaceLayout
from .objectsets import ProjectorSpec, QuantumObjectSet
from .purification import IsometricDilation, Purification
from .scenarios import BellModel, Correlations, LHVModel, Node, ProcessMatrixSpec, Scenario, Wire
from .steering import SteeringFailure, UnsteerableDecomposition

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3


def canonical_json(obj: Any) -> str:
    """Sorted keys, no whitespace, shortest round-trip doubles."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def fnv1a64(data: bytes) -> str:
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return f"{h:016x}"


def digest(obj: Any) -> str:
    return fnv1a64(canonical_json(obj).encode())


def loads(text: str) -> Any:
    """``json.loads`` with line/column diagnostics on malformed input."""
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None


def load_file(path) -> Any:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())


# Decoding helpers


def _get(obj, key, pointer, kind=None):
    if not isinstance(obj, dict):
        raise ParseError("expected an object", pointer)
    if key not in obj:
        raise ParseError(f"missing field {key!r}", pointer)
    value = obj[key]
    if kind is not None and not isinstance(value, kind):
        raise ParseError(f"field has the wrong type, expected {getattr(kind, '__name__', kind)}", f"{pointer}/{key}")
    return value


def _wrap(fn, pointer):
    try:
        return fn()
    except ParseError:
        raise
    except (PurikitError, ValueError, TypeError) as exc:
        raise ParseError(str(exc), pointer) from None


# Matrices and layouts


def encode_matrix(m: np.ndarray) -> dict:
    m = np.asarray(m, dtype=complex)
    if m.ndim == 1:
        m = m.reshape(-1, 1)
    return {
        "rows": m.shape[0],
        "cols": m.shape[1],
        "re": m.real.tolist(),
        "im": m.imag.tolist(),
    }


def decode_matrix(obj, pointer: str = "") -> np.ndarray:
    rows = _get(obj, "rows", pointer, int)
    cols = _get(obj, "cols", pointer, int)
    re = _get(obj, "re", pointer, list)
    im = _get(obj, "im", pointer, list)
    for name, part in (("re", re), ("im", im)):
        if len(part) != rows or any(not isinstance(r, list) or len(r) != cols for r in part):
            raise ParseError(f"expected {rows} rows of {cols} entries", f"{pointer}/{name}")
    try:
        return np.array(re, dtype=float) + 1j * np.array(im, dtype=float)
    except (TypeError, ValueError):
        raise ParseError("entries must be numbers", pointer) from None


def encode_layout(layout: SpaceLayout) -> dict:
    return {"factors": [{"label": f.label, "dim": f.dim, "role": f.role} for f in layout.factors]}


def decode_layout(obj, pointer: str = "") -> SpaceLayout:
    factors = _get(obj, "factors", pointer, list)
    out = []
    for n, f in enumerate(factors):
        p = f"{pointer}/factors/{n}"
        label = _get(f, "label", p, str)
        dim = _get(f, "dim", p, int)
        role = f.get("role", "wire") if isinstance(f, dict) else "wire"
        out.append(_wrap(lambda: Factor(label, dim, role), p))
    return _wrap(lambda: SpaceLayout(tuple(out)), pointer)


def encode_projector(spec: ProjectorSpec) -> dict:
    if spec.kind == "state":
        return {"kind": "state"}
    if spec.kind == "channel":
        return {"kind": "channel", "inputs": list(spec.inputs), "outputs": list(spec.outputs)}
    if spec.kind == "comb":
        return {"kind": "comb", "slots": [list(s) for s in spec.slots]}
    return {"kind": "extended", "aux": spec.aux, "base": encode_projector(spec.base)}


def decode_projector(obj, pointer: str = "") -> ProjectorSpec:
    kind = _get(obj, "kind", pointer, str)
    if kind == "state":
        return ProjectorSpec.state()
    if kind == "channel":
        return ProjectorSpec.channel(_get(obj, "inputs", pointer, list), _get(obj, "outputs", pointer, list))
    if kind == "comb":
        slots = _get(obj, "slots", pointer, list)
        for n, s in enumerate(slots):
            if not isinstance(s, list) or len(s) != 2:
                raise ParseError("a slot is an [input, output] pair", f"{pointer}/slots/{n}")
        return ProjectorSpec.comb(slots)
    if kind == "extended":
        base = decode_projector(_get(obj, "base", pointer, dict), f"{pointer}/base")
        return ProjectorSpec.extended(base, _get(obj, "aux", pointer, str))
    raise ParseError(f"unknown projector kind {kind!r}", f"{pointer}/kind")


def encode_set(s: QuantumObjectSet) -> dict:
    return {"layout": encode_layout(s.layout), "projector": encode_projector(s.projector), "gamma": s.gamma}


def decode_set(obj, pointer: str = "") -> QuantumObjectSet:
    layout = decode_layout(_get(obj, "layout", pointer, dict), f"{pointer}/layout")
    projector = decode_projector(_get(obj, "projector", pointer, dict), f"{pointer}/projector")
    gamma = obj.get("gamma")
    if gamma is not None and not isinstance(gamma, (int, float)):
        raise ParseError("gamma must be a number", f"{pointer}/gamma")
    return _wrap(lambda: QuantumObjectSet(layout, projector, None if gamma is None else float(gamma)), pointer)


# Assemblages


def encode_assemblage(asm: Assemblage) -> dict:
    return {
        "set": encode_set(asm.object_set),
        "members": [{"x": x, "a": a, "matrix": encode_matrix(m)} for (x, a), m in asm.members.items()],
    }


def decode_assemblage(obj, pointer: str = "") -> Assemblage:
    objset = decode_set(_get(obj, "set", pointer, dict), f"{pointer}/set")
    members = {}
    for n, entry in enumerate(_get(obj, "members", pointer, list)):
        p = f"{pointer}/members/{n}"
        x = str(_get(entry, "x", p))
        a = str(_get(entry, "a", p))
        if (x, a) in members:
            raise ParseError(f"duplicate member ({x}, {a})", p)
        m = decode_matrix(_get(entry, "matrix", p, dict), f"{p}/matrix")
        if m.shape != (objset.dim, objset.dim):
            raise ParseError(f"matrix is {m.shape[0]}x{m.shape[1]}, set dimension is {objset.dim}", f"{p}/matrix")
        members[(x, a)] = m
    if not members:
        raise ParseError("an assemblage needs at least one member", f"{pointer}/members")
    return Assemblage(objset, members)


def _encode_povms(povms) -> list:
    return [{"x": x, "a": a, "matrix": encode_matrix(m)} for (x, a), m in povms.items()]


def _decode_povms(items, pointer):
    out = {}
    for n, entry in enumerate(items):
        p = f"{pointer}/{n}"
        out[(str(_get(entry, "x", p)), str(_get(entry, "a", p)))] = decode_matrix(_get(entry, "matrix", p, dict), f"{p}/matrix")
    return out


def encode_purification(p: Purification) -> dict:
    return {
        "aux_dim": p.aux_dim,
        "omega": encode_matrix(p.omega),
        "povms": _encode_povms(p.povms),
        "extended_set": encode_set(p.extended_set),
    }


def decode_purification(obj, pointer: str = "") -> Purification:
    return Purification(
        _get(obj, "aux_dim", pointer, int),
        decode_matrix(_get(obj, "omega", pointer, dict), f"{pointer}/omega").reshape(-1),
        _decode_povms(_get(obj, "povms", pointer, list), f"{pointer}/povms"),
        decode_set(_get(obj, "extended_set", pointer, dict), f"{pointer}/extended_set"),
    )


def encode_dilation(d: IsometricDilation) -> dict:
    return {
        "isometry": encode_matrix(d.isometry),
        "kraus": [encode_matrix(k) for k in d.kraus.operators],
        "povms": _encode_povms(d.povms),
    }


# Scenarios


def encode_scenario(s: Scenario) -> dict:
    network = None
    if s.network is not None:
        network = {"w": encode_matrix(s.network.w), "layout": encode_layout(s.network.layout), "rounds": s.network.rounds}
    return {
        "nodes": [{"id": n.id, "role": n.role, "assemblage": encode_assemblage(n.assemblage)} for n in s.nodes],
        "wires": [{"from": f"{w.src}.{w.src_label}", "to": f"{w.dst}.{w.dst_label}", "dim": w.dim} for w in s.wires],
        "network": network,
        "acyclic": s.acyclic,
    }


def decode_scenario(obj, pointer: str = "") -> Scenario:
    nodes = []
    for n, entry in enumerate(_get(obj, "nodes", pointer, list)):
        p = f"{pointer}/nodes/{n}"
        node_id = _get(entry, "id", p, str)
        role = entry.get("role", "transform") if isinstance(entry, dict) else "transform"
        asm = decode_assemblage(_get(entry, "assemblage", p, dict), f"{p}/assemblage")
        nodes.append(_wrap(lambda: Node(node_id, asm, role), p))
    wires = []
    for n, entry in enumerate(obj.get("wires") or []):
        p = f"{pointer}/wires/{n}"
        src = _get(entry, "from", p, str)
        dst = _get(entry, "to", p, str)
        dim = _get(entry, "dim", p, int)
        if "." not in src or "." not in dst:
            raise ParseError("wire ends are written 'node.label'", p)
        wires.append(Wire.between(src, dst, dim))
    network = None
    if obj.get("network") is not None:
        p = f"{pointer}/network"
        net = obj["network"]
        w = decode_matrix(_get(net, "w", p, dict), f"{p}/w")
        layout = decode_layout(_get(net, "layout", p, dict), f"{p}/layout")
        network = _wrap(lambda: ProcessMatrixSpec(w, layout, int(net.get("rounds", 1))), p)
    acyclic = bool(obj.get("acyclic", True))
    return _wrap(lambda: Scenario(tuple(nodes), tuple(wires), network, acyclic), pointer)


def parse_scenario(path) -> Scenario:
    """Read and fully validate a scenario file."""
    return decode_scenario(load_file(path))


def parse_assemblage(path) -> Assemblage:
    return decode_assemblage(load_file(path))


# Results


def encode_correlations(c: Correlations) -> dict:
    return {
        "parties": list(c.parties),
        "settings": [list(x) for x in c.settings],
        "outcomes": [list(a) for a in c.outcomes],
        "axes": [f"x:{p}" for p in c.parties] + [f"a:{p}" for p in c.parties],
        "shape": list(c.p.shape),
        "p": c.p.reshape(-1).tolist(),
    }


def decode_correlations(obj, pointer: str = "") -> Correlations:
    parties = tuple(_get(obj, "parties", pointer, list))
    settings = tuple(tuple(x) for x in _get(obj, "settings", pointer, list))
    outcomes = tuple(tuple(a) for a in _get(obj, "outcomes", pointer, list))
    shape = tuple(len(x) for x in settings) + tuple(len(a) for a in outcomes)
    flat = _get(obj, "p", pointer, list)
    if len(flat) != int(np.prod(shape)):
        raise ParseError(f"expected {int(np.prod(shape))} probabilities", f"{pointer}/p")
    return _wrap(lambda: Correlations(parties, settings, outcomes, np.array(flat, dtype=float).reshape(shape)), pointer)


def encode_bell_model(m: BellModel) -> dict:
    return {
        "parties": list(m.parties),
        "shared_state": encode_matrix(m.shared_state),
        "pure": m.is_pure,
        "party_layout": encode_layout(m.party_layout),
        "party_povms": [_encode_povms(p) for p in m.party_povms],
    }


def decode_bell_model(obj, pointer: str = "") -> BellModel:
    state = decode_matrix(_get(obj, "shared_state", pointer, dict), f"{pointer}/shared_state")
    if obj.get("pure", True):
        state = state.reshape(-1)
    povms = tuple(
        _decode_povms(items, f"{pointer}/party_povms/{n}") for n, items in enumerate(_get(obj, "party_povms", pointer, list))
    )
    layout = decode_layout(_get(obj, "party_layout", pointer, dict), f"{pointer}/party_layout")
    return BellModel(tuple(_get(obj, "parties", pointer, list)), state, povms, layout)


def encode_lhv(m: LHVModel) -> dict:
    return {
        "parties": list(m.parties),
        "settings": [list(x) for x in m.settings],
        "outcomes": [list(a) for a in m.outcomes],
        "lambda_support": [list(map(str, lam)) for lam in m.lambda_support],
        "weights": m.weights.tolist(),
        "responses": [r.tolist() for r in m.responses],
    }


def encode_decomposition(d: UnsteerableDecomposition) -> dict:
    return {
        "settings": list(d.settings),
        "outcomes": list(d.outcomes),
        "lambda_support": [list(map(str, lam)) if isinstance(lam, tuple) else str(lam) for lam in d.lambda_support],
        "weights": d.weights.tolist(),
        "responses": d.responses.tolist(),
        "objects": [encode_matrix(w) for w in d.objects],
    }


def decode_decomposition(obj, pointer: str = "") -> UnsteerableDecomposition:
    support = tuple(tuple(lam) if isinstance(lam, list) else lam for lam in _get(obj, "lambda_support", pointer, list))
    objects = np.array(
        [decode_matrix(w, f"{pointer}/objects/{n}") for n, w in enumerate(_get(obj, "objects", pointer, list))]
    )
    return _wrap(
        lambda: UnsteerableDecomposition(
            tuple(_get(obj, "settings", pointer, list)),
            tuple(_get(obj, "outcomes", pointer, list)),
            support,
            np.array(_get(obj, "weights", pointer, list), dtype=float),
            np.array(_get(obj, "responses", pointer, list), dtype=float),
            objects,
        ),
        pointer,
    )


def encode_failure(f: SteeringFailure) -> dict:
    return {"residual": f.residual, "iterations": f.iterations, "restarts": f.restarts, "trajectory": list(map(float, f.trajectory))}
