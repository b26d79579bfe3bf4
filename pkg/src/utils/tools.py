import sys

from rich.console import Console
from rich.table import Table

from src.experiments.report import ExperimentReport
from src.sheq.wick_oracle import AsymptoticConstants


def format_value(value: float | None, digits: int = 7) -> str:
    """Short human-readable number; the CSV keeps full precision."""
    if value is None:
        return ""
    return format(float(value), f".{digits}g")


def print_table(table: Table, stderr: bool = False):
    console = Console(file=sys.stderr if stderr else sys.stdout, soft_wrap=True)
    console.print(table)


def constants_table(constants: AsymptoticConstants) -> Table:
    """
    Limit value and limiting variances for one theta.

    The "exact" column includes the correlation of neighbouring increments,
    the "nominal" column is the 384/(pi^2 theta^2) family.
    """
    table = Table(title=f"Asymptotic constants, theta = {format_value(constants.theta)}")
    table.add_column("quantity")
    table.add_column("nominal", justify="right")
    table.add_column("exact", justify="right")
    table.add_row("limit 6/(pi theta)", format_value(constants.limit), format_value(constants.limit))
    table.add_row(
        "sigma_theta^2", format_value(constants.sigma_theta_sq), format_value(constants.sigma_theta_sq_exact)
    )
    table.add_row(
        "sigma_1,theta^2", format_value(constants.sigma1_theta_sq), format_value(constants.sigma1_theta_sq_exact)
    )
    return table


def oracle_table(rows: list[tuple[int, float, float]], constants: AsymptoticConstants) -> Table:
    table = Table(title=f"Exact moments of V_N, theta = {format_value(constants.theta)}")
    for name in ("N", "E[V_N]", "Var[V_N]", "N Var[V_N]", "E[V_N] - limit"):
        table.add_column(name, justify="right")
    for N, mean, var in rows:
        table.add_row(str(N), format_value(mean), format_value(var), format_value(N * var), format_value(mean - constants.limit))
    table.caption = (
        f"limit {format_value(constants.limit)}, "
        f"N Var limit {format_value(constants.sigma_theta_sq_exact)} "
        f"(nominal {format_value(constants.sigma_theta_sq)})"
    )
    return table


def report_table(report: ExperimentReport, max_rows: int = 60) -> Table:
    """Console summary of a report; rows beyond max_rows are elided."""
    table = Table(title=f"{report.experiment} (master seed {report.master_seed})")
    for name in ("N", "stat", "value", "stderr"):
        table.add_column(name, justify="left" if name == "stat" else "right")
    for row in report.rows[:max_rows]:
        table.add_row(str(row["N"]), row["stat"], format_value(row["value"]), format_value(row["stderr"]))
    if len(report.rows) > max_rows:
        table.caption = f"{len(report.rows) - max_rows} more rows in the CSV"
    return table
