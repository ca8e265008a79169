"""
The whole pipeline from the command line
========================================

Every stage is a ``vqpe`` subcommand that reads the previous stage's files
under one output directory. This script drives them through
``vqpe.cli.main`` with a deliberately tiny configuration so the run takes
well under a minute. The same calls work from a shell::

    vqpe generate -c tiny.conf -o demo_out/cli
    vqpe preprocess -c tiny.conf -o demo_out/cli
    ...
"""
import os

from vqpe import cli

here = os.path.dirname(os.path.abspath(__file__))
out = os.path.join(here, "demo_out", "cli")
conf = os.path.join(here, "demo_out", "tiny.conf")
os.makedirs(os.path.dirname(conf), exist_ok=True)
with open(conf, "w") as fh:
    fh.write("""\
# 24 small cases, short GA and HMC runs
phantom_size = 32
n_negative = 10
n_intermediate = 9
n_high = 5
ga_population = 16
ga_generations = 10
image_size = 16
n_inputs = 5
vr = 0.9
hmc_n_burnin = 100
hmc_n_committee = 50
""")

for stage in ("generate", "preprocess", "align", "features", "train", "predict", "evaluate"):
    print(f"$ vqpe {stage} -c {os.path.relpath(conf)} -o {os.path.relpath(out)}")
    code = cli.main([stage, "-c", conf, "-o", out])
    if code:
        raise SystemExit(code)
