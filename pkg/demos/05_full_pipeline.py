"""
The whole analysis in one call
==============================

Synthesize the 240-token corpus, analyse it and print the report. The
same steps are available from the shell as ``vowelspace run-all``.
"""

from vowelspace.pipeline import RunConfig, run_all

config = RunConfig(out_dir="demo_results", timestamp=False)
results = run_all(config)

with open("demo_results/report.txt", encoding="utf-8") as fh:
    print(fh.read())
print("aligned MDS coordinates for plotting: demo_results/mds/mds_all.csv")
print("distance distributions per f0:       demo_results/observations.csv")
print("per-channel spectra:                 demo_results/spectra/")
