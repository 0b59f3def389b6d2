"""From a raw daily-cases CSV to supervised training tensors.

Walks the bundled sample through every pipeline stage: ingest the raw file
(newest-first rows, day-first dates), mark holidays and the gathering days
around them, turn the records into a feature matrix, frame it into sliding
windows, and scale everything from the training portion only.
"""

from batnas import data

records = data.ingest("data/sample_ecdc.csv", country="Samistan")
print(f"ingested {len(records)} days: {records[0].date} .. {records[-1].date}")

calendar = data.load_holidays("data/sample_holidays.csv")
augmented = data.augment(records, calendar)
holidays = sum(r.d_type for r in augmented)
gatherings = sum(r.gathering for r in augmented)
print(f"{len(calendar)} calendar holidays -> {holidays} d_type days, "
      f"{gatherings} gathering days")

# a gathering day is a holiday or a single workday squeezed between two
week = augmented[60:70]
print("\nindex  cases  d_type  gathering")
for r in week:
    print(f"{r.index:5d}  {r.cases:5d}  {r.d_type:6d}  {r.gathering:9d}")

matrix = data.to_feature_matrix(augmented, mode="augmented")
print(f"\nfeature matrix: {matrix.shape} (cases, c_num, d_type, gathering)")

train, test, scaler = data.prepare_supervised(matrix, timesteps=14, ratio=0.8)
print(f"windows of 14 days -> {train.sample_count} train / {test.sample_count} test")
print(f"one input window has shape {train.inputs.shape[1:]}, target is the next day")
print(f"scaled training range: [{train.inputs.min():.3f}, {train.inputs.max():.3f}]")
print(f"a test target in case counts: {scaler.inverse_transform_targets(test.targets[:1])[0]:.0f}")
