"""Print the cross-method oracle matrix that guards the numerics.

Run: python demos/oracle_matrix.py
"""

from loglog_euler.experiments import ExperimentConfig, format_matrix, run_oracles

report = run_oracles(ExperimentConfig(scenario="oracle-suite").with_quick())
print(format_matrix(report))
print(report.verdict)
