import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from batnas import genome as G
from batnas.errors import ConfigError, DataError


# ---------------------------------------------------------------------------
# Gray code
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("width", range(1, 9))
def test_gray_round_trip_exhaustive(width):
    for n in range(2**width):
        bits = G.gray_encode(n, width)
        assert len(bits) == width
        assert G.gray_decode(bits) == n


@pytest.mark.parametrize("width", range(1, 9))
def test_gray_adjacency_exhaustive(width):
    for n in range(2**width - 1):
        a = G.gray_encode(n, width)
        b = G.gray_encode(n + 1, width)
        assert int(np.sum(a != b)) == 1


def test_gray_known_values():
    assert "".join(map(str, G.gray_encode(16, 5))) == "11000"
    assert "".join(map(str, G.gray_encode(0, 5))) == "00000"
    assert G.gray_decode(np.array([1, 1, 0, 0, 0], dtype=np.uint8)) == 16


def test_gray_encode_rejects_overflow():
    with pytest.raises(ValueError):
        G.gray_encode(32, 5)
    with pytest.raises(ValueError):
        G.gray_encode(-1, 5)


# ---------------------------------------------------------------------------
# Layout
# ---------------------------------------------------------------------------

def test_default_layout_is_32_bits():
    layout = G.default_layout()
    assert G.genome_length(layout) == 32
    assert layout.unit_caps == (31, 31, 63, 63)
    assert layout.timestep_cap == 31
    assert layout.unit_bit_widths == (5, 5, 6, 6)
    assert layout.timestep_bit_width == 5


def test_layout_from_caps_picks_minimal_widths():
    layout = G.layout_from_caps((31, 31, 63, 63), 31)
    assert layout == G.default_layout()
    small = G.layout_from_caps((7, 7, 7, 7), 15)
    assert small.unit_bit_widths == (3, 3, 3, 3)
    assert small.timestep_bit_width == 4
    assert G.genome_length(small) == 3 + 2 + 12 + 4


def test_layout_rejects_undersized_widths():
    with pytest.raises(ConfigError):
        G.GenomeLayout(
            optional_layer_count=3,
            activation_slot_count=2,
            unit_bit_widths=(4, 5, 6, 6),
            timestep_bit_width=5,
            unit_caps=(31, 31, 63, 63),
            timestep_cap=31,
        )


# ---------------------------------------------------------------------------
# Decode
# ---------------------------------------------------------------------------

def test_all_zero_genome_is_minimal_architecture():
    layout = G.default_layout()
    spec = G.decode(G.Genome(np.zeros(32, dtype=np.uint8), layout))
    assert spec.timesteps == 1
    kinds = [(l.kind, l.present) for l in spec.layers]
    assert kinds == [
        (G.RECURRENT, True),
        (G.RECURRENT, False),
        (G.DENSE, False),
        (G.DENSE, False),
        (G.OUTPUT, True),
    ]
    assert all(l.units == 1 for l in spec.layers)
    present = spec.present_layers()
    assert len(present) == 2
    assert present[-1].activation == G.SIGMOID


def test_all_one_genome_decodes_to_caps():
    layout = G.default_layout()
    spec = G.decode(G.Genome(np.ones(32, dtype=np.uint8), layout))
    # all-ones gray fields decode to mid-range values, clamped into [1, cap]
    for layer, cap in zip(spec.layers[:4], layout.unit_caps):
        assert 1 <= layer.units <= cap
    assert 1 <= spec.timesteps <= layout.timestep_cap
    assert all(l.present for l in spec.layers)


def test_decode_is_total():
    layout = G.default_layout()
    rng = np.random.default_rng(7)
    for _ in range(500):
        bits = rng.integers(0, 2, size=32, dtype=np.uint8)
        spec = G.decode(G.Genome(bits, layout))
        assert 1 <= spec.timesteps <= layout.timestep_cap
        assert spec.layers[0].present and spec.layers[0].kind == G.RECURRENT
        assert spec.layers[-1].present and spec.layers[-1].units == 1
        for layer, cap in zip(spec.layers[:4], layout.unit_caps):
            assert 1 <= layer.units <= cap


def test_unit_clamp_lower_bound():
    layout = G.default_layout()
    bits = np.zeros(32, dtype=np.uint8)
    spec = G.decode(G.Genome(bits, layout))
    assert spec.layers[0].units == 1  # gray 0 clamps up to 1
    assert spec.timesteps == 1


# ---------------------------------------------------------------------------
# Encode / round trip
# ---------------------------------------------------------------------------

def _spec(t, units, dense_act=G.RELU, out_act=G.RELU, present=(True, True, True)):
    return G.ArchitectureSpec(
        timesteps=t,
        layers=(
            G.LayerSpec(G.RECURRENT, True, units[0]),
            G.LayerSpec(G.RECURRENT, present[0], units[1]),
            G.LayerSpec(G.DENSE, present[1], units[2], dense_act),
            G.LayerSpec(G.DENSE, present[2], units[3], dense_act),
            G.LayerSpec(G.OUTPUT, True, 1, out_act),
        ),
    )


REFERENCE_SPECS = {
    "M1": _spec(21, (18, 26, 9, 63)),
    "M2": _spec(16, (24, 27, 16, 3)),
    "M3": _spec(23, (12, 29, 16, 2)),
    "M4": _spec(24, (25, 20, 9, 33)),
}


@pytest.mark.parametrize("name", sorted(REFERENCE_SPECS))
def test_reference_architectures_round_trip(name):
    layout = G.default_layout()
    spec = REFERENCE_SPECS[name]
    encoded = G.encode(spec, layout)
    assert len(encoded.bits) == 32
    assert G.decode(encoded) == spec


def test_encode_rejects_values_over_cap():
    layout = G.default_layout()
    with pytest.raises(DataError):
        G.encode(_spec(32, (18, 26, 9, 63)), layout)  # t over cap 31
    with pytest.raises(DataError):
        G.encode(_spec(21, (32, 26, 9, 63)), layout)  # units over cap 31


def test_encode_rejects_mixed_dense_activations():
    layout = G.default_layout()
    spec = G.ArchitectureSpec(
        timesteps=4,
        layers=(
            G.LayerSpec(G.RECURRENT, True, 2),
            G.LayerSpec(G.RECURRENT, False, 1),
            G.LayerSpec(G.DENSE, True, 3, G.RELU),
            G.LayerSpec(G.DENSE, True, 3, G.SIGMOID),
            G.LayerSpec(G.OUTPUT, True, 1, G.RELU),
        ),
    )
    with pytest.raises(DataError):
        G.encode(spec, layout)


@settings(max_examples=200, deadline=None)
@given(st.binary(min_size=4, max_size=4))
def test_decode_encode_decode_is_stable(raw):
    # decode is total; decode -> encode -> decode must be the identity on specs
    bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8))
    layout = G.default_layout()
    spec = G.decode(G.Genome(bits, layout))
    spec2 = G.decode(G.encode(spec, layout))
    assert spec2 == spec


@settings(max_examples=200, deadline=None)
@given(
    t=st.integers(1, 31),
    u1=st.integers(1, 31),
    u2=st.integers(1, 31),
    u3=st.integers(1, 63),
    u4=st.integers(1, 63),
    p2=st.booleans(),
    p3=st.booleans(),
    p4=st.booleans(),
    dense_act=st.sampled_from([G.RELU, G.SIGMOID]),
    out_act=st.sampled_from([G.RELU, G.SIGMOID]),
)
def test_encode_decode_round_trip_property(t, u1, u2, u3, u4, p2, p3, p4, dense_act, out_act):
    layout = G.default_layout()
    spec = _spec(t, (u1, u2, u3, u4), dense_act, out_act, present=(p2, p3, p4))
    assert G.decode(G.encode(spec, layout)) == spec


# ---------------------------------------------------------------------------
# Spec validation
# ---------------------------------------------------------------------------

def test_architecture_requires_present_recurrent_head():
    with pytest.raises(DataError):
        G.ArchitectureSpec(
            timesteps=4,
            layers=(
                G.LayerSpec(G.RECURRENT, False, 2),
                G.LayerSpec(G.OUTPUT, True, 1, G.RELU),
            ),
        )


def test_output_layer_must_be_single_unit():
    with pytest.raises(DataError):
        G.ArchitectureSpec(
            timesteps=4,
            layers=(
                G.LayerSpec(G.RECURRENT, True, 2),
                G.LayerSpec(G.OUTPUT, True, 2, G.RELU),
            ),
        )


def test_recurrent_layer_rejects_activation_tag():
    with pytest.raises(DataError):
        G.LayerSpec(G.RECURRENT, True, 2, G.RELU)


def test_dense_layer_requires_activation():
    with pytest.raises(DataError):
        G.LayerSpec(G.DENSE, True, 2)


# ---------------------------------------------------------------------------
# Text records
# ---------------------------------------------------------------------------

def test_architecture_text_round_trip():
    spec = REFERENCE_SPECS["M4"]
    text = G.architecture_to_text(spec, name="M4")
    assert text.splitlines()[0] == "spec M4"
    parsed = G.parse_architectures(text)
    assert parsed == [("M4", spec)]


def test_parse_multiple_architectures():
    text = "\n\n".join(
        G.architecture_to_text(spec, name=name) for name, spec in sorted(REFERENCE_SPECS.items())
    )
    parsed = G.parse_architectures(text)
    assert [name for name, _ in parsed] == sorted(REFERENCE_SPECS)
    for name, spec in parsed:
        assert spec == REFERENCE_SPECS[name]


def test_parse_rejects_garbage():
    with pytest.raises(DataError):
        G.architecture_from_text("timesteps banana\nlayer recurrent present units=2")


def test_genome_bitstring_round_trip():
    layout = G.default_layout()
    g = G.encode(REFERENCE_SPECS["M1"], layout)
    again = G.Genome.from_string(g.bitstring(), layout)
    assert again == g
