"""Fixed-length bit-vector genomes for LSTM forecaster architectures.

A genome packs four fields into one bit string: existence flags for the
optional layers, activation selectors (1 = ReLU, 0 = Sigmoid), gray-coded
unit counts for every unit-bearing layer, and a gray-coded input window
length. Decoding is total: every bit pattern maps to a buildable
architecture (out-of-range numeric fields clamp to their valid range).

The supported layer family is fixed: one always-present recurrent layer,
one optional recurrent layer, any number of optional dense layers, and an
always-present single-unit output layer. The default layout sizes this
family so the whole genome is 32 bits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError

RECURRENT = "recurrent"
DENSE = "dense"
OUTPUT = "output"
RELU = "relu"
SIGMOID = "sigmoid"

_KINDS = (RECURRENT, DENSE, OUTPUT)
_ACTIVATIONS = (RELU, SIGMOID)


@dataclass(frozen=True)
class GenomeLayout:
    """Bit budget of one genome.

    ``unit_bit_widths``/``unit_caps`` carry one entry per unit-bearing
    layer (the fixed first recurrent layer plus every optional layer); the
    single-unit output layer has no units field.
    """

    optional_layer_count: int
    activation_slot_count: int
    unit_bit_widths: tuple[int, ...]
    timestep_bit_width: int
    unit_caps: tuple[int, ...]
    timestep_cap: int

    def __post_init__(self):
        object.__setattr__(self, "unit_bit_widths", tuple(self.unit_bit_widths))
        object.__setattr__(self, "unit_caps", tuple(self.unit_caps))
        if self.optional_layer_count < 1:
            raise ConfigError("optional_layer_count must be >= 1")
        if self.activation_slot_count < 1:
            raise ConfigError("activation_slot_count must be >= 1")
        if len(self.unit_bit_widths) != len(self.unit_caps):
            raise ConfigError("unit_bit_widths and unit_caps must pair up")
        for width, cap in zip(self.unit_bit_widths, self.unit_caps):
            _check_width(width, cap, "unit")
        _check_width(self.timestep_bit_width, self.timestep_cap, "timestep")

    @property
    def total_bits(self) -> int:
        return genome_length(self)


def _check_width(width: int, cap: int, what: str) -> None:
    if width < 1 or cap < 1:
        raise ConfigError(f"{what} width and cap must be >= 1")
    if 2**width - 1 < cap:
        raise ConfigError(f"{what} cap {cap} does not fit in {width} bits")


def genome_length(layout: GenomeLayout) -> int:
    """Total bit count: existence + activation + unit fields + timestep field."""
    return (
        layout.optional_layer_count
        + layout.activation_slot_count
        + sum(layout.unit_bit_widths)
        + layout.timestep_bit_width
    )


def default_layout() -> GenomeLayout:
    """32-bit layout: 3 existence bits, 2 activation bits, unit fields for
    two recurrent layers (cap 31, 5 bits each) and two dense layers (cap 63,
    6 bits each), and a 5-bit window length capped at 31."""
    return GenomeLayout(
        optional_layer_count=3,
        activation_slot_count=2,
        unit_bit_widths=(5, 5, 6, 6),
        timestep_bit_width=5,
        unit_caps=(31, 31, 63, 63),
        timestep_cap=31,
    )


def layout_from_caps(unit_caps: tuple[int, ...], timestep_cap: int) -> GenomeLayout:
    """Layout for the same layer family with custom caps; widths are the
    smallest that can represent each cap."""
    if len(unit_caps) < 2:
        raise ConfigError("need caps for at least the fixed recurrent layer and one optional layer")
    widths = tuple(max(1, math.ceil(math.log2(cap + 1))) for cap in unit_caps)
    return GenomeLayout(
        optional_layer_count=len(unit_caps) - 1,
        activation_slot_count=2,
        unit_bit_widths=widths,
        timestep_bit_width=max(1, math.ceil(math.log2(timestep_cap + 1))),
        unit_caps=tuple(unit_caps),
        timestep_cap=timestep_cap,
    )


@dataclass
class Genome:
    """One candidate: a bit vector plus the layout that interprets it."""

    bits: np.ndarray
    layout: GenomeLayout

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=np.uint8) & 1
        expected = genome_length(self.layout)
        if self.bits.ndim != 1 or self.bits.size != expected:
            raise DataError(f"genome must be {expected} bits, got shape {self.bits.shape}")

    def bitstring(self) -> str:
        return "".join(str(int(b)) for b in self.bits)

    @classmethod
    def from_string(cls, text: str, layout: GenomeLayout) -> "Genome":
        text = text.strip()
        if not text or set(text) - {"0", "1"}:
            raise DataError(f"genome string must contain only 0/1, got {text!r}")
        return cls(np.array([int(c) for c in text], dtype=np.uint8), layout)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Genome):
            return NotImplemented
        return self.layout == other.layout and bool(np.array_equal(self.bits, other.bits))


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    present: bool
    units: int
    activation: str | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise DataError(f"unknown layer kind {self.kind!r}")
        if self.units < 1:
            raise DataError("layer units must be >= 1")
        if self.kind == RECURRENT:
            if self.activation is not None:
                raise DataError("recurrent layers use their fixed gate nonlinearities")
        elif self.activation not in _ACTIVATIONS:
            raise DataError(f"{self.kind} layer needs activation in {_ACTIVATIONS}")


@dataclass(frozen=True)
class ArchitectureSpec:
    """Decoded network description: window length plus ordered layers.

    The first layer is always a present recurrent layer; the last is always
    the present single-unit output layer. Layers in between may be marked
    absent (their unit counts ride along as dormant genes so encoding stays
    lossless).
    """

    timesteps: int
    layers: tuple[LayerSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if self.timesteps < 1:
            raise DataError("timesteps must be >= 1")
        if len(self.layers) < 2:
            raise DataError("need at least the fixed recurrent layer and the output layer")
        first, last = self.layers[0], self.layers[-1]
        if first.kind != RECURRENT or not first.present:
            raise DataError("first layer must be a present recurrent layer")
        if last.kind != OUTPUT or not last.present or last.units != 1:
            raise DataError("last layer must be the present single-unit output layer")
        for layer in self.layers[1:-1]:
            if layer.kind == OUTPUT:
                raise DataError("output layer only allowed in last position")

    def present_layers(self) -> tuple[LayerSpec, ...]:
        return tuple(layer for layer in self.layers if layer.present)


def gray_encode(n: int, width: int) -> np.ndarray:
    """Reflected binary gray code of ``n``, MSB first, ``width`` bits."""
    if width < 1:
        raise ValueError("width must be >= 1")
    if not 0 <= n < 2**width:
        raise ValueError(f"value {n} out of range for {width} bits")
    g = n ^ (n >> 1)
    return np.array([(g >> (width - 1 - i)) & 1 for i in range(width)], dtype=np.uint8)


def gray_decode(bits) -> int:
    """Inverse of :func:`gray_encode` (prefix-XOR), MSB first."""
    value = 0
    acc = 0
    for bit in np.asarray(bits, dtype=np.uint8):
        acc ^= int(bit)
        value = (value << 1) | acc
    return value


def _field_slices(layout: GenomeLayout):
    """(existence, activation, unit fields..., timestep) slice boundaries."""
    pos = 0
    existence = slice(pos, pos + layout.optional_layer_count)
    pos = existence.stop
    activation = slice(pos, pos + layout.activation_slot_count)
    pos = activation.stop
    units = []
    for width in layout.unit_bit_widths:
        units.append(slice(pos, pos + width))
        pos += width
    timestep = slice(pos, pos + layout.timestep_bit_width)
    return existence, activation, units, timestep


def _check_family(layout: GenomeLayout) -> None:
    if layout.activation_slot_count != 2:
        raise ConfigError("this layer family uses 2 activation bits (dense group, output)")
    if len(layout.unit_caps) != layout.optional_layer_count + 1:
        raise ConfigError("need one unit field per unit-bearing layer (fixed recurrent + optionals)")


def decode(genome: Genome) -> ArchitectureSpec:
    """Map a genome to its architecture.

    Existence bits gate the optional layers in order (second recurrent
    layer, then the dense layers). The first activation bit picks the
    shared dense activation, the second the output activation. Unit and
    timestep fields gray-decode and clamp into [1, cap].
    """
    layout = genome.layout
    _check_family(layout)
    existence_sl, activation_sl, unit_sls, timestep_sl = _field_slices(layout)
    bits = genome.bits

    existence = [bool(b) for b in bits[existence_sl]]
    act_bits = bits[activation_sl]
    dense_act = RELU if act_bits[0] else SIGMOID
    output_act = RELU if act_bits[1] else SIGMOID
    units = [
        min(max(gray_decode(bits[sl]), 1), cap)
        for sl, cap in zip(unit_sls, layout.unit_caps)
    ]
    timesteps = min(max(gray_decode(bits[timestep_sl]), 1), layout.timestep_cap)

    layers = [LayerSpec(RECURRENT, True, units[0])]
    layers.append(LayerSpec(RECURRENT, existence[0], units[1]))
    for present, n_units in zip(existence[1:], units[2:]):
        layers.append(LayerSpec(DENSE, present, n_units, dense_act))
    layers.append(LayerSpec(OUTPUT, True, 1, output_act))
    return ArchitectureSpec(timesteps=timesteps, layers=tuple(layers))


def encode(spec: ArchitectureSpec, layout: GenomeLayout) -> Genome:
    """Inverse of :func:`decode`; rejects specs that the layout cannot hold."""
    _check_family(layout)
    expected_layers = layout.optional_layer_count + 2
    if len(spec.layers) != expected_layers:
        raise DataError(f"layout holds {expected_layers} layers, spec has {len(spec.layers)}")
    if spec.layers[1].kind != RECURRENT:
        raise DataError("second layer must be recurrent in this family")
    for layer in spec.layers[2:-1]:
        if layer.kind != DENSE:
            raise DataError("middle layers must be dense in this family")
    if spec.timesteps > layout.timestep_cap:
        raise DataError(f"timesteps {spec.timesteps} exceeds cap {layout.timestep_cap}")
    unit_layers = spec.layers[:-1]
    for layer, cap in zip(unit_layers, layout.unit_caps):
        if layer.units > cap:
            raise DataError(f"{layer.kind} units {layer.units} exceeds cap {cap}")
    dense_layers = [l for l in spec.layers[2:-1]]
    dense_acts = {l.activation for l in dense_layers}
    if len(dense_acts) > 1:
        raise DataError("this family shares one activation across dense layers")
    dense_act = dense_layers[0].activation if dense_layers else SIGMOID

    parts = [np.array([int(l.present) for l in spec.layers[1:-1]], dtype=np.uint8)]
    parts.append(
        np.array(
            [int(dense_act == RELU), int(spec.layers[-1].activation == RELU)],
            dtype=np.uint8,
        )
    )
    for layer, width in zip(unit_layers, layout.unit_bit_widths):
        parts.append(gray_encode(layer.units, width))
    parts.append(gray_encode(spec.timesteps, layout.timestep_bit_width))
    return Genome(np.concatenate(parts), layout)


# ---------------------------------------------------------------------------
# Text records
# ---------------------------------------------------------------------------

def architecture_to_text(spec: ArchitectureSpec, name: str | None = None) -> str:
    """Human-readable record; round-trips through :func:`architecture_from_text`."""
    lines = []
    if name is not None:
        lines.append(f"spec {name}")
    lines.append(f"timesteps {spec.timesteps}")
    for layer in spec.layers:
        presence = "present" if layer.present else "absent"
        line = f"layer {layer.kind} {presence} units={layer.units}"
        if layer.activation is not None:
            line += f" activation={layer.activation}"
        lines.append(line)
    return "\n".join(lines) + "\n"


def _parse_block(lines: list[tuple[int, str]], source: str) -> tuple[str | None, ArchitectureSpec]:
    name = None
    timesteps = None
    layers: list[LayerSpec] = []
    for lineno, line in lines:
        tokens = line.split()
        head = tokens[0]
        if head == "spec":
            name = line[len("spec") :].strip() or None
        elif head == "timesteps":
            if len(tokens) != 2:
                raise DataError(f"{source}:{lineno}: expected 'timesteps <n>'")
            try:
                timesteps = int(tokens[1])
            except ValueError as exc:
                raise DataError(f"{source}:{lineno}: bad timesteps {tokens[1]!r}") from exc
        elif head == "layer":
            if len(tokens) < 3:
                raise DataError(f"{source}:{lineno}: expected 'layer <kind> present|absent ...'")
            kind = tokens[1]
            if tokens[2] not in ("present", "absent"):
                raise DataError(f"{source}:{lineno}: expected present|absent, got {tokens[2]!r}")
            present = tokens[2] == "present"
            units = None
            activation = None
            for token in tokens[3:]:
                if "=" not in token:
                    raise DataError(f"{source}:{lineno}: expected key=value, got {token!r}")
                key, value = token.split("=", 1)
                if key == "units":
                    try:
                        units = int(value)
                    except ValueError as exc:
                        raise DataError(f"{source}:{lineno}: bad units {value!r}") from exc
                elif key == "activation":
                    activation = value
                else:
                    raise DataError(f"{source}:{lineno}: unknown layer field {key!r}")
            if units is None:
                if present:
                    raise DataError(f"{source}:{lineno}: layer line needs units=<n>")
                units = 1  # dormant layer; size is irrelevant
            if activation is None and kind != RECURRENT and not present:
                activation = SIGMOID
            try:
                layers.append(LayerSpec(kind, present, units, activation))
            except DataError as exc:
                raise DataError(f"{source}:{lineno}: {exc}") from exc
        else:
            raise DataError(f"{source}:{lineno}: unknown record line {line!r}")
    if timesteps is None:
        raise DataError(f"{source}: record is missing a 'timesteps' line")
    if not layers:
        raise DataError(f"{source}: record has no layer lines")
    try:
        return name, ArchitectureSpec(timesteps=timesteps, layers=tuple(layers))
    except DataError as exc:
        raise DataError(f"{source}: {exc}") from exc


def parse_architectures(text: str, source: str = "<string>") -> list[tuple[str, ArchitectureSpec]]:
    """Parse one or more named records. Blocks start at a ``spec <name>``
    line or after a blank line; unnamed blocks get spec1, spec2, ..."""
    blocks: list[list[tuple[int, str]]] = []
    current: list[tuple[int, str]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            if current:
                blocks.append(current)
                current = []
            continue
        if line.split()[0] == "spec" and current:
            blocks.append(current)
            current = []
        current.append((lineno, line))
    if current:
        blocks.append(current)
    if not blocks:
        raise DataError(f"{source}: no architecture records found")
    results = []
    for i, block in enumerate(blocks, start=1):
        name, spec = _parse_block(block, source)
        results.append((name or f"spec{i}", spec))
    return results


def architecture_from_text(text: str, source: str = "<string>") -> ArchitectureSpec:
    records = parse_architectures(text, source)
    if len(records) != 1:
        raise DataError(f"{source}: expected exactly one record, found {len(records)}")
    return records[0][1]
