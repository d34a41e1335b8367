"""Scripted mock scenarios shared by the orchestrator, CLI and acceptance tests."""

from __future__ import annotations

from strategies import doc, el

P1 = "The method trains a small model on clean data and reports the results in detail."
P2 = "The evaluation section lists accuracy numbers for every model that we tried."

# iteration 1 output for p2: judged too verbose
P2_VERBOSE = "VERBOSE " + P2 + " It also repeats itself and then repeats itself again."

MCU_DEFAULT = {"facts": [], "digest": "", "entities": []}


def loop_doc():
    return doc(
        el("h", "Heading", 72, 40, 540, 60, "Results", 1),
        el("p1", "Paragraph", 72, 70, 540, 170, P1),
        el("p2", "Paragraph", 72, 180, 540, 280, P2),
        hierarchy=[("h", "p1"), ("h", "p2")],
    )


def feedback_message() -> str:
    return "Paragraph p2 in section 'Results': too verbose (goal: shorten)"


def two_iteration_script() -> dict:
    """Iteration 1: p1 passes, p2 is judged too verbose (iar 0.5).

    The follow-up rewrite of p2 returns exactly the text SCS compares against,
    and the judge accepts it, so iteration 2 passes every threshold.
    """
    repaired = " ".join(["shorten", feedback_message(), P2])
    return {
        "rules": [
            # the follow-up prompt also contains "goal: shorten", so it must come first
            {"stage": "CRA", "contains": "goal: Paragraph p2", "response": {"text": repaired}},
            {"stage": "CRA", "contains": "goal: tighten", "response": {"text": "tighten " + P1}},
            {"stage": "CRA", "contains": "goal: shorten", "response": {"text": P2_VERBOSE}},
            {"stage": "FCV", "contains": "candidate_text:\nVERBOSE", "response": {"satisfied": False, "reason": "too verbose"}},
        ],
        "defaults": {
            "MCU": MCU_DEFAULT,
            "IDA": {
                "ops": [
                    {"kind": "RewriteText", "target": "p1", "payload": {"goal": "tighten"}},
                    {"kind": "RewriteText", "target": "p2", "payload": {"goal": "shorten"}},
                ]
            },
            "FCV": {"satisfied": True, "reason": "ok"},
        },
    }


def always_failing_script() -> dict:
    """The judge never accepts anything; follow-up rewrites drift back toward the intent."""
    return {
        "rules": [
            {"stage": "CRA", "contains": "goal: Paragraph p1", "response": {"text": "tighten " + P1}},
            {"stage": "CRA", "contains": "goal: tighten", "response": {"text": "Completely unrelated words about bananas."}},
        ],
        "defaults": {
            "MCU": MCU_DEFAULT,
            "IDA": {"ops": [{"kind": "RewriteText", "target": "p1", "payload": {"goal": "tighten"}}]},
            "FCV": {"satisfied": False, "reason": "never good enough"},
        },
    }


def zero_op_script() -> dict:
    return {"defaults": {"MCU": MCU_DEFAULT, "IDA": {"ops": []}}}
