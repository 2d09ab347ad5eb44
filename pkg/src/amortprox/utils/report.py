from __future__ import annotations

import json
from typing import Any, NotRequired, TypedDict


class CheckResult(TypedDict):
    """One named verification with its measured value and acceptance threshold."""

    name: str
    measured: float
    threshold: float
    passed: bool
    detail: NotRequired[str]


class Report(TypedDict):
    """Result structure for check and verification reports."""

    success: bool
    message: str
    data: NotRequired[dict[str, Any]]


def check_result(name: str, measured: float, threshold: float, passed: bool, detail: str = "") -> CheckResult:
    result: CheckResult = {
        "name": name,
        "measured": float(measured),
        "threshold": float(threshold),
        "passed": bool(passed),
    }
    if detail:
        result["detail"] = detail
    return result


def summarize_checks(checks: list[CheckResult], message: str = "") -> Report:
    """Fold check results into a report whose success flag is the conjunction of all checks."""
    failed = [c["name"] for c in checks if not c["passed"]]
    if not message:
        message = f"{len(checks) - len(failed)}/{len(checks)} checks passed."
        if failed:
            message += " Failed: " + ", ".join(failed)
    return {"success": not failed, "message": message, "data": {"checks": list(checks)}}


def build_report(success: bool, message: str, data: dict[str, Any] | None = None) -> str:
    """Serialize a report into a JSON string with a success flag."""
    payload: dict[str, Any] = {
        "success": success,
        "message": message,
    }

    if data:
        payload["data"] = data

    return json.dumps(payload, ensure_ascii=False, indent=2)


def parse_report(raw_report: str) -> Report:
    """Parse and validate a report string.
    Args:
        raw_report: Raw JSON string previously written by `build_report`
    Returns:
        Validated Report dict with success, message, and optional data fields
    """
    try:
        parsed = json.loads(raw_report)
    except (json.JSONDecodeError, ValueError) as e:
        return {
            "success": False,
            "message": f"Invalid JSON report: {e}",
        }

    if not isinstance(parsed, dict):
        return {
            "success": False,
            "message": f"Report is not a dict: {type(parsed).__name__}",
        }

    raw_success = parsed.get("success", False)
    if isinstance(raw_success, str):
        is_success = raw_success.lower() == "true"
    else:
        is_success = bool(raw_success)

    result: Report = {"success": is_success, "message": str(parsed.get("message", ""))}

    if "data" in parsed:
        data = parsed["data"]
        if isinstance(data, dict):
            result["data"] = data
        else:
            result["data"] = {"value": data}

    return result
