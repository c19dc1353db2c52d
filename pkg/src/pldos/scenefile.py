"""Scene file parsing and serialization.

The scene format is a flat, sectioned key = value text format:

    [units]
    length = 1.0                # scene length unit L0 in meters

    [background]
    material = vacuum

    [material glass]
    eps_infinity = 2.25
    lorentz = {strength = 1.0, resonance = 2.0, damping = 0.1}

    [voxels]
    pitch = 0.25
    voxel = {center = (0.0, 0.0, 1.0), material = glass}

    [emitter]
    position = (0.0, 0.0, 0.0)
    dipole = (0.0, 0.0, 1.0)
    omega0 = 1.0

    [drive]
    omega_laser = 1.0
    rabi = 0.01

`#` starts a comment.  `lorentz` and `voxel` may repeat; every other key is
single valued.  Frequencies are in units of 1/L0 (hbar = c = 1), dipole
components may be complex (e.g. `1+0.5j`).  The material name `vacuum` is
built in.
"""

import hashlib
from dataclasses import dataclass, field

from .errors import SceneError
from .green import Scene, Voxel
from .emission import Emitter
from .materials import VACUUM, LorentzTerm, PermittivityModel

_SECTION_KINDS = ("units", "background", "material", "voxels", "emitter", "drive")

_SECTION_KEYS = {
    "units": {"length"},
    "background": {"material"},
    "material": {"eps_infinity", "lorentz"},
    "voxels": {"pitch", "voxel"},
    "emitter": {"position", "dipole", "omega0", "smear_width"},
    "drive": {"omega_laser", "rabi"},
}

_REPEATED_KEYS = {"lorentz", "voxel"}


@dataclass(frozen=True)
class DriveSettings:
    """Laser drive block: frequency and complex Rabi amplitude."""

    omega_laser: float
    rabi: complex


@dataclass(frozen=True)
class SceneFile:
    """Parsed scene: units, materials, geometry, emitter and drive."""

    units_length: float
    background_name: str
    materials: tuple  # ((name, PermittivityModel), ...) sorted by name
    scene: Scene
    emitter: Emitter = None
    drive: DriveSettings = None
    sha256: str = field(default="", compare=False, repr=False)

    def material(self, name):
        if name == "vacuum":
            return VACUUM
        for key, model in self.materials:
            if key == name:
                return model
        raise KeyError(name)


class _Section:
    def __init__(self, kind, arg, line):
        self.kind = kind
        self.arg = arg
        self.line = line
        self.entries = []  # (line, key, raw value)

    def single(self, key, required=False):
        hits = [(ln, raw) for ln, k, raw in self.entries if k == key]
        if not hits:
            if required:
                raise SceneError(f"{self.kind}.{key} required", line=self.line)
            return None, None
        if len(hits) > 1:
            raise SceneError(
                f"duplicate key '{key}' (first at line {hits[0][0]})",
                line=hits[1][0],
            )
        return hits[0]

    def repeated(self, key):
        return [(ln, raw) for ln, k, raw in self.entries if k == key]


def _split_top_level(text, sep=","):
    """Split on separators that are not nested inside () or {}."""
    parts = []
    depth = 0
    buf = []
    for ch in text:
        if ch in "({":
            depth += 1
        elif ch in ")}":
            depth -= 1
        if ch == sep and depth == 0:
            parts.append("".join(buf))
            buf = []
        else:
            buf.append(ch)
    parts.append("".join(buf))
    return parts


def _parse_float(raw, line, key):
    try:
        return float(raw.strip())
    except ValueError:
        raise SceneError(f"key '{key}': expected a real number, got {raw!r}",
                         line=line) from None


def _parse_complex(raw, line, key):
    try:
        return complex(raw.strip().replace(" ", ""))
    except ValueError:
        raise SceneError(f"key '{key}': expected a number, got {raw!r}",
                         line=line) from None


def _parse_triple(raw, line, key, scalar):
    raw = raw.strip()
    if not (raw.startswith("(") and raw.endswith(")")):
        raise SceneError(f"key '{key}': expected a 3-vector '(a, b, c)'", line=line)
    parts = _split_top_level(raw[1:-1])
    if len(parts) != 3:
        raise SceneError(f"key '{key}': expected exactly 3 components", line=line)
    return tuple(scalar(p, line, key) for p in parts)


def _parse_table(raw, line, key):
    raw = raw.strip()
    if not (raw.startswith("{") and raw.endswith("}")):
        raise SceneError(f"key '{key}': expected a table '{{k = v, ...}}'", line=line)
    table = {}
    body = raw[1:-1].strip()
    if not body:
        return table
    for item in _split_top_level(body):
        if "=" not in item:
            raise SceneError(f"key '{key}': table entry {item.strip()!r} "
                             "is not 'name = value'", line=line)
        name, value = item.split("=", 1)
        name = name.strip()
        if name in table:
            raise SceneError(f"key '{key}': duplicate table entry '{name}'",
                             line=line)
        table[name] = value.strip()
    return table


def _tokenize(text):
    sections = []
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise SceneError("unterminated section header", line=lineno)
            parts = line[1:-1].split()
            if not parts:
                raise SceneError("empty section header", line=lineno)
            kind = parts[0]
            if kind not in _SECTION_KINDS:
                raise SceneError(f"unknown section '{kind}'", line=lineno)
            if kind == "material":
                if len(parts) != 2:
                    raise SceneError("material section needs exactly one name, "
                                     "e.g. [material glass]", line=lineno)
                arg = parts[1]
            else:
                if len(parts) != 1:
                    raise SceneError(f"section '{kind}' takes no argument",
                                     line=lineno)
                arg = None
            current = _Section(kind, arg, lineno)
            sections.append(current)
            continue
        if current is None:
            raise SceneError(f"column 1: key outside any section: {line!r}",
                             line=lineno)
        if "=" not in line:
            raise SceneError(f"expected 'key = value', got {line!r}", line=lineno)
        key, value = line.split("=", 1)
        key = key.strip()
        if key not in _SECTION_KEYS[current.kind]:
            col = raw.find(key) + 1
            raise SceneError(
                f"column {col}: unknown key '{key}' in section '{current.kind}'",
                line=lineno,
            )
        if key not in _REPEATED_KEYS:
            pass  # duplicate detection happens in _Section.single
        current.entries.append((lineno, key, value.strip()))
    return sections


def _build_material(section):
    eps_line, eps_raw = section.single("eps_infinity")
    eps_inf = 1.0 if eps_raw is None else _parse_float(eps_raw, eps_line,
                                                       "eps_infinity")
    terms = []
    for line, raw in section.repeated("lorentz"):
        table = _parse_table(raw, line, "lorentz")
        missing = {"strength", "resonance", "damping"} - set(table)
        if missing:
            raise SceneError(f"lorentz table missing {sorted(missing)}", line=line)
        extra = set(table) - {"strength", "resonance", "damping"}
        if extra:
            raise SceneError(f"lorentz table has unknown entries {sorted(extra)}",
                             line=line)
        try:
            terms.append(LorentzTerm(
                strength=_parse_float(table["strength"], line, "lorentz.strength"),
                resonance=_parse_float(table["resonance"], line, "lorentz.resonance"),
                damping=_parse_float(table["damping"], line, "lorentz.damping"),
            ))
        except ValueError as exc:
            raise SceneError(str(exc), line=line) from None
    try:
        return PermittivityModel(eps_infinity=eps_inf, terms=tuple(terms))
    except ValueError as exc:
        raise SceneError(str(exc), line=section.line) from None


def parse_scene(text):
    """Parse scene text into a SceneFile; raises SceneError with the offending
    line on any syntax or semantic problem."""
    sections = _tokenize(text)

    seen = {}
    materials = {}
    material_lines = {}
    for section in sections:
        if section.kind == "material":
            if section.arg == "vacuum":
                raise SceneError("material name 'vacuum' is built in",
                                 line=section.line)
            if section.arg in materials:
                raise SceneError(
                    f"material '{section.arg}' already defined at line "
                    f"{material_lines[section.arg]}", line=section.line)
            materials[section.arg] = _build_material(section)
            material_lines[section.arg] = section.line
        else:
            if section.kind in seen:
                raise SceneError(
                    f"section '{section.kind}' already defined at line "
                    f"{seen[section.kind].line}", line=section.line)
            seen[section.kind] = section

    def lookup_material(name, line):
        if name == "vacuum":
            return VACUUM
        if name not in materials:
            raise SceneError(f"undefined material '{name}'", line=line)
        return materials[name]

    if "units" not in seen:
        raise SceneError("units.length required")
    length_line, length_raw = seen["units"].single("length", required=True)
    units_length = _parse_float(length_raw, length_line, "length")
    if not units_length > 0.0:
        raise SceneError("units.length must be > 0", line=length_line)

    background_name = "vacuum"
    if "background" in seen:
        line, raw = seen["background"].single("material", required=True)
        background_name = raw
        lookup_material(background_name, line)

    pitch = 1.0
    voxels = []
    if "voxels" in seen:
        section = seen["voxels"]
        voxel_entries = section.repeated("voxel")
        pitch_line, pitch_raw = section.single("pitch",
                                               required=bool(voxel_entries))
        if pitch_raw is not None:
            pitch = _parse_float(pitch_raw, pitch_line, "pitch")
            if not pitch > 0.0:
                raise SceneError("voxels.pitch must be > 0", line=pitch_line)
        centers = {}
        for line, raw in voxel_entries:
            table = _parse_table(raw, line, "voxel")
            missing = {"center", "material"} - set(table)
            if missing:
                raise SceneError(f"voxel table missing {sorted(missing)}",
                                 line=line)
            center = _parse_triple(table["center"], line, "voxel.center",
                                   _parse_float)
            key = tuple(round(c / pitch) for c in center)
            if key in centers:
                raise SceneError(
                    f"duplicate voxel center {center} "
                    f"(first defined at line {centers[key]})", line=line)
            centers[key] = line
            voxels.append(Voxel(center=center,
                                material=lookup_material(table["material"], line)))

    background = lookup_material(background_name, seen.get("background",
                                                           _Section("", None, 0)).line)
    try:
        scene = Scene(background=background, voxels=tuple(voxels),
                      voxel_pitch=pitch)
    except ValueError as exc:
        raise SceneError(str(exc),
                         line=seen["voxels"].line if "voxels" in seen else None
                         ) from None

    emitter = None
    if "emitter" in seen:
        section = seen["emitter"]
        pos_line, pos_raw = section.single("position", required=True)
        dip_line, dip_raw = section.single("dipole", required=True)
        w_line, w_raw = section.single("omega0", required=True)
        s_line, s_raw = section.single("smear_width")
        try:
            emitter = Emitter(
                position=_parse_triple(pos_raw, pos_line, "position", _parse_float),
                mu=_parse_triple(dip_raw, dip_line, "dipole", _parse_complex),
                omega0=_parse_float(w_raw, w_line, "omega0"),
                smear_width=0.0 if s_raw is None
                else _parse_float(s_raw, s_line, "smear_width"),
            )
        except ValueError as exc:
            raise SceneError(str(exc), line=section.line) from None
        if scene.contains(emitter.position):
            raise SceneError("emitter position lies inside a voxel", line=pos_line)

    drive = None
    if "drive" in seen:
        section = seen["drive"]
        w_line, w_raw = section.single("omega_laser", required=True)
        r_line, r_raw = section.single("rabi", required=True)
        omega_laser = _parse_float(w_raw, w_line, "omega_laser")
        if not omega_laser > 0.0:
            raise SceneError("drive.omega_laser must be > 0", line=w_line)
        drive = DriveSettings(omega_laser=omega_laser,
                              rabi=_parse_complex(r_raw, r_line, "rabi"))

    return SceneFile(
        units_length=units_length,
        background_name=background_name,
        materials=tuple(sorted(materials.items())),
        scene=scene,
        emitter=emitter,
        drive=drive,
        sha256=hashlib.sha256(text.encode("utf-8")).hexdigest(),
    )


def _fmt_scalar(value):
    if isinstance(value, complex):
        if value.imag == 0.0:
            return repr(value.real)
        sign = "+" if value.imag >= 0 else "-"
        return f"{value.real!r}{sign}{abs(value.imag)!r}j"
    return repr(float(value))


def _fmt_triple(values):
    return "(" + ", ".join(_fmt_scalar(v) for v in values) + ")"


def serialize_scene(scene_file):
    """Render a SceneFile back to canonical scene text (stable ordering)."""
    out = ["[units]", f"length = {_fmt_scalar(scene_file.units_length)}", ""]
    out += ["[background]", f"material = {scene_file.background_name}", ""]
    for name, model in scene_file.materials:
        out.append(f"[material {name}]")
        out.append(f"eps_infinity = {_fmt_scalar(model.eps_infinity)}")
        for term in model.terms:
            out.append(
                "lorentz = {strength = " + _fmt_scalar(term.strength)
                + ", resonance = " + _fmt_scalar(term.resonance)
                + ", damping = " + _fmt_scalar(term.damping) + "}"
            )
        out.append("")
    scene = scene_file.scene
    if scene.voxels:
        out.append("[voxels]")
        out.append(f"pitch = {_fmt_scalar(scene.voxel_pitch)}")
        name_of = {id(model): name for name, model in scene_file.materials}
        name_of[id(VACUUM)] = "vacuum"
        for voxel in scene.voxels:
            name = next((n for n, m in scene_file.materials if m == voxel.material),
                        "vacuum" if voxel.material == VACUUM else None)
            if name is None:
                raise ValueError("voxel material is not in the materials table")
            out.append("voxel = {center = " + _fmt_triple(voxel.center)
                       + f", material = {name}}}")
        out.append("")
    if scene_file.emitter is not None:
        e = scene_file.emitter
        out += [
            "[emitter]",
            f"position = {_fmt_triple(e.position)}",
            f"dipole = {_fmt_triple(e.mu)}",
            f"omega0 = {_fmt_scalar(e.omega0)}",
            f"smear_width = {_fmt_scalar(e.smear_width)}",
            "",
        ]
    if scene_file.drive is not None:
        out += [
            "[drive]",
            f"omega_laser = {_fmt_scalar(scene_file.drive.omega_laser)}",
            f"rabi = {_fmt_scalar(scene_file.drive.rabi)}",
            "",
        ]
    return "\n".join(out)
