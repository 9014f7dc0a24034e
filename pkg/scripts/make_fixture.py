"""Write the synthetic gambling-task fixture used by the fit config and tests.

Four simulated subjects (two healthy, two clinical), 100 trials each, long layout.
"""
from pathlib import Path

import numpy as np

from fusionagent.core import TrialRecord
from fusionagent.fusion import igt_agent
from fusionagent.inference import SubjectData
from fusionagent.io import write_igt_csv
from fusionagent.presets import orl_preset

OUT = Path(__file__).resolve().parents[1] / "tests" / "fixtures" / "synthetic_igt.csv"


def main():
    rng = np.random.default_rng(7)
    params = orl_preset("healthy").sample(2, rng) + orl_preset("clinical").sample(2, rng)
    subjects = []
    for i, p in enumerate(params):
        run = igt_agent(p, fusion=None, seed=100 + i)
        trials = [TrialRecord(t.action, t.record.gain, t.record.loss) for t in run.records]
        subjects.append(SubjectData(f"sub{i + 1:02d}", trials))
    OUT.parent.mkdir(parents=True, exist_ok=True)
    write_igt_csv(subjects, OUT)
    print(OUT)


if __name__ == "__main__":
    main()
