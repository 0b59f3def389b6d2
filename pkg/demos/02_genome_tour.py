"""How an architecture becomes 32 bits and comes back unharmed.

The genome packs layer existence flags, activation choices, gray-coded unit
counts and the gray-coded window length. Gray coding matters to the swarm:
a single flipped bit moves a unit count by one step instead of teleporting
it across the range.
"""

from batnas import genome as G

layout = G.default_layout()
spec = G.ArchitectureSpec(
    timesteps=24,
    layers=(
        G.LayerSpec(G.RECURRENT, True, 25),
        G.LayerSpec(G.RECURRENT, True, 20),
        G.LayerSpec(G.DENSE, True, 9, G.RELU),
        G.LayerSpec(G.DENSE, True, 33, G.RELU),
        G.LayerSpec(G.OUTPUT, True, 1, G.RELU),
    ),
)

encoded = G.encode(spec, layout)
bits = encoded.bitstring()
print(f"architecture -> {bits}")
print(f"  existence  {bits[0:3]}   (second LSTM, first dense, second dense)")
print(f"  activation {bits[3:5]}    (dense pair, output; 1=relu)")
print(f"  units      {bits[5:10]} {bits[10:15]} {bits[15:21]} {bits[21:27]}")
print(f"  timesteps  {bits[27:32]}")

decoded = G.decode(encoded)
assert decoded == spec
print("\nround trip is lossless")

# flip one unit-count bit: gray coding keeps the step small
flipped = bits[:9] + ("0" if bits[9] == "1" else "1") + bits[10:]
neighbour = G.decode(G.Genome.from_string(flipped, layout))
print(
    f"\nflipping one bit of LSTM1's field: {spec.layers[0].units} units"
    f" -> {neighbour.layers[0].units} units"
)

# the all-zero genome is the smallest legal network, not an error
smallest = G.decode(G.Genome.from_string("0" * 32, layout))
print(f"\nall-zero genome: timesteps={smallest.timesteps}, layers present:",
      [l.kind for l in smallest.layers if l.present])
