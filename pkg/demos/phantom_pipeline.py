"""End to end on the synthetic cohort: generate, extract, select, evaluate.

Run with ``python demos/phantom_pipeline.py [workdir]``. It takes about a
minute and leaves every intermediate file in the work directory.
"""
import sys
import tempfile
import time
from pathlib import Path

from cardiorad.cli import plot_curve_svg
from cardiorad.features import extract_table, write_table
from cardiorad.phantom import PhantomSpec, generate_dataset
from cardiorad.selection import ablation_report, loo_accuracy, metrics_from_confusion, sfs_select
from cardiorad.svm import SvmParams

work = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="cardiorad-"))
t0 = time.perf_counter()

# 100 subjects, 20 per diagnostic group, each with ED and ES frames.
manifest = generate_dataset(PhantomSpec(per_class=20, seed=42), work / "data")
print(f"phantoms written to {work / 'data'} ({time.perf_counter() - t0:.0f} s)")

table = extract_table(manifest, threads=4)
write_table(table, work / "table.csv")
print(f"feature table: {table.values.shape[0]} subjects x {table.values.shape[1]} features")

params = SvmParams()
trace = sfs_select(table, params, threads=4)
plot_curve_svg(trace, work / "curve.svg")
for k, (name, acc) in enumerate(trace.steps, start=1):
    mark = "*" if k == trace.chosen_k else " "
    print(f"{mark}{k:2d}  {acc:.3f}  {name}")

acc, cm = loo_accuracy(table, trace.selected(), params)
report = metrics_from_confusion(cm)
print(f"\nLOO accuracy {acc:.3f} with {trace.chosen_k} features")
print("confusion (rows predicted, columns true):")
print("      " + " ".join(f"{c:>5}" for c in cm.classes))
for c, row in zip(cm.classes, cm.counts):
    print(f"{c:>5} " + " ".join(f"{v:5d}" for v in row))

print("\nper-feature ablation:")
print(f"{'feature':40} {'type':22} {'frame':5} {'struct':6} {'w/o':>5} {'alone':>5}")
for r in ablation_report(table, trace, params):
    without = "-" if r["without"] is None else f"{r['without']:.2f}"
    print(f"{r['feature']:40} {r['type']:22} {r['frame']:5} {r['structure']:6} "
          f"{without:>5} {r['alone']:5.2f}")
print(f"\ndone in {time.perf_counter() - t0:.0f} s; curve at {work / 'curve.svg'}")
