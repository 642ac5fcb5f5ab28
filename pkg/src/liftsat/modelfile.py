"""Line-oriented model file format.

Sections in square brackets hold key = value lines; expressions use the
shipped grammar.  Built-in closed-form packs are referenced by name in
[model]; without one the model is built generically from the declared
generator fields.

    [model]
    name = grushin
    coords = x1 x2
    base_point = 0 0
    builtin = grushin
    kernel = heisenberg

    [fields]
    X1 = 1 | 0
    X2 = 0 | x1

    [operator]
    term = 1 : X1^2
    term = 1 : X2^2

    [sample_box]
    min = -2 -2
    max = 2 2

    [subgroup]
    generator = 2*pi | 0 | 0
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .closure import lie_closure
from .expr import Expr, ONE, parse, evaluate, to_string, simplify
from .fields import vector_field, diff_operator, bracket_table_from_tensor
from .models import LiftedModel, get_model, builtin_names
from . import groupgeom

__all__ = ["ModelFileError", "ModelFileData", "parse_model_file",
           "load_model", "serialize_model_file"]


class ModelFileError(ValueError):
    pass


@dataclass
class ModelFileData:
    name: str
    coords: tuple[str, ...]
    base_point: tuple[float, ...]
    field_names: tuple[str, ...]
    field_coeffs: tuple[tuple[str, ...], ...]   # expression strings
    operator_terms: tuple[tuple[str, str], ...]  # (coeff text, word text)
    builtin: str | None = None
    kernel: str | None = None
    sample_box: tuple | None = None
    subgroup_generators: tuple[tuple[str, ...], ...] = ()
    raw_text: str = ""
    fiber_coords: tuple[str, ...] = ()


def _parse_sections(text: str) -> dict[str, list[tuple[str, str, int]]]:
    sections: dict[str, list[tuple[str, str, int]]] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip().lower()
            sections.setdefault(current, [])
            continue
        if current is None:
            raise ModelFileError(f"line {lineno}: content before any [section]")
        if "=" not in line:
            raise ModelFileError(f"line {lineno}: expected key = value")
        key, value = line.split("=", 1)
        sections[current].append((key.strip(), value.strip(), lineno))
    return sections


def _one(sections, sec: str, key: str, default=None, required: bool = False):
    for k, v, _ in sections.get(sec, []):
        if k == key:
            return v
    if required:
        raise ModelFileError(f"missing '{key}' in [{sec}]")
    return default


def parse_model_file(text: str) -> ModelFileData:
    sections = _parse_sections(text)
    if "model" not in sections:
        raise ModelFileError("missing [model] section")
    name = _one(sections, "model", "name", required=True)
    coords = tuple(_one(sections, "model", "coords", required=True).split())
    base = tuple(float(v) for v in
                 _one(sections, "model", "base_point", required=True).split())
    if len(base) != len(coords):
        raise ModelFileError("base_point dimension differs from coords")
    fiber = _one(sections, "model", "fiber", default="")
    builtin = _one(sections, "model", "builtin")
    kernel = _one(sections, "model", "kernel")

    if "fields" not in sections or not sections["fields"]:
        raise ModelFileError("missing [fields] section")
    fnames, fcoeffs = [], []
    for key, value, lineno in sections["fields"]:
        parts = [p.strip() for p in value.split("|")]
        if len(parts) != len(coords):
            raise ModelFileError(
                f"line {lineno}: field {key} needs {len(coords)} coefficients")
        for p in parts:
            try:
                parse(p, symbols=coords)
            except Exception as exc:
                raise ModelFileError(f"line {lineno}: bad expression '{p}': {exc}") \
                    from exc
        fnames.append(key)
        fcoeffs.append(tuple(parts))

    terms = []
    for key, value, lineno in sections.get("operator", []):
        if key != "term":
            raise ModelFileError(f"line {lineno}: only 'term' entries allowed")
        if ":" not in value:
            raise ModelFileError(f"line {lineno}: term needs 'coeff : word'")
        coeff, word = value.split(":", 1)
        terms.append((coeff.strip(), word.strip()))
    if not terms:
        raise ModelFileError("missing [operator] terms")

    box = None
    if "sample_box" in sections:
        lo = _one(sections, "sample_box", "min", required=True).split()
        hi = _one(sections, "sample_box", "max", required=True).split()
        box = (tuple(float(v) for v in lo), tuple(float(v) for v in hi))

    gens = []
    for key, value, lineno in sections.get("subgroup", []):
        if key != "generator":
            raise ModelFileError(f"line {lineno}: only 'generator' entries allowed")
        gens.append(tuple(p.strip() for p in value.split("|")))

    return ModelFileData(
        name=name, coords=coords, base_point=base,
        field_names=tuple(fnames), field_coeffs=tuple(fcoeffs),
        operator_terms=tuple(terms), builtin=builtin, kernel=kernel,
        sample_box=box, subgroup_generators=tuple(gens), raw_text=text,
        fiber_coords=tuple(fiber.split()) if fiber else (),
    )


def _parse_word(word: str, names_in_order: tuple[str, ...]) -> tuple[int, ...]:
    """'X1^2 X3' -> multi-index over the ordered name list."""
    alpha = [0] * len(names_in_order)
    last = -1
    for token in word.split():
        if "^" in token:
            base, exp = token.split("^", 1)
            count = int(exp)
        else:
            base, count = token, 1
        if base not in names_in_order:
            raise ModelFileError(f"unknown field '{base}' in operator word")
        idx = names_in_order.index(base)
        if idx < last:
            raise ModelFileError(
                f"operator words must list fields in basis order; got '{word}'")
        last = idx
        alpha[idx] += count
    return tuple(alpha)


def load_model(data: ModelFileData, max_depth: int = 6, seed: int = 0) -> LiftedModel:
    """Build a LiftedModel from parsed file data.

    With a builtin reference the closed-form pack is used after checking
    the declared generators match; otherwise everything is generic.
    """
    if data.builtin is not None:
        if data.builtin not in builtin_names():
            raise ModelFileError(f"unknown builtin '{data.builtin}'")
        model = get_model(data.builtin)
        if model.coords != data.coords:
            raise ModelFileError("declared coords differ from the builtin chart")
        declared = [tuple(simplify(parse(c, symbols=data.coords)) for c in row)
                    for row in data.field_coeffs]
        builtin_gens = [tuple(X.coeffs) for X in
                        model.presentation.basis[:model.presentation.q]]
        if declared != builtin_gens:
            raise ModelFileError(
                f"declared generator fields differ from builtin '{data.builtin}'")
        model.kernel_name = data.kernel if data.kernel else model.kernel_name
        model.source_text = data.raw_text
        if data.sample_box is not None:
            model.sample_box = data.sample_box
        return model

    gens = [vector_field(data.coords,
                         [parse(c, symbols=data.coords) for c in row])
            for row in data.field_coeffs]
    pres = lie_closure(gens, max_depth=max_depth, seed=seed,
                       box=(data.sample_box or ((-2.0,) * len(data.coords),
                                                (2.0,) * len(data.coords))))
    basis_names = list(data.field_names) + \
        [f"B{i+1}" for i in range(pres.n - pres.q)]
    terms = {}
    for coeff_text, word in data.operator_terms:
        alpha = _parse_word(word, tuple(basis_names))
        coeff = parse(coeff_text, symbols=data.coords)
        terms[alpha] = simplify(terms.get(alpha, None) + coeff) \
            if alpha in terms else coeff
    op = diff_operator(data.coords, pres.basis, terms, names=tuple(basis_names),
                       bracket_table=bracket_table_from_tensor(pres.tensor))
    p = pres.n - pres.m
    fiber = data.fiber_coords or tuple(f"s{j+1}" for j in range(p))
    if len(fiber) != p:
        raise ModelFileError(f"fiber names must have length {p}")
    gens_h = tuple(tuple(parse(g) for g in row) for row in data.subgroup_generators)
    model = LiftedModel(
        name=data.name,
        presentation=pres,
        base_point=np.asarray(data.base_point, dtype=float),
        fiber_coords=fiber,
        operator=op,
        fiber_basis=groupgeom.fiber_basis_at_base(pres, data.base_point),
        h_generators=gens_h,
        kernel_name=data.kernel,
        sample_box=data.sample_box or ((-2.0,) * pres.m, (2.0,) * pres.m),
        source_text=data.raw_text,
    )
    return model


def serialize_model_file(data: ModelFileData) -> str:
    lines = ["[model]", f"name = {data.name}",
             f"coords = {' '.join(data.coords)}",
             f"base_point = {' '.join(repr(v) for v in data.base_point)}"]
    if data.fiber_coords:
        lines.append(f"fiber = {' '.join(data.fiber_coords)}")
    if data.builtin:
        lines.append(f"builtin = {data.builtin}")
    if data.kernel:
        lines.append(f"kernel = {data.kernel}")
    lines.append("")
    lines.append("[fields]")
    for name, row in zip(data.field_names, data.field_coeffs):
        lines.append(f"{name} = {' | '.join(row)}")
    lines.append("")
    lines.append("[operator]")
    for coeff, word in data.operator_terms:
        lines.append(f"term = {coeff} : {word}")
    if data.sample_box is not None:
        lines.append("")
        lines.append("[sample_box]")
        lines.append(f"min = {' '.join(repr(v) for v in data.sample_box[0])}")
        lines.append(f"max = {' '.join(repr(v) for v in data.sample_box[1])}")
    if data.subgroup_generators:
        lines.append("")
        lines.append("[subgroup]")
        for row in data.subgroup_generators:
            lines.append(f"generator = {' | '.join(row)}")
    return "\n".join(lines) + "\n"
