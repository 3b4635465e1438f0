from fluorpoison.poisongen import AttackGoal
from fluorpoison.vqa import (
    HIDING_ACTION_RESPONSE,
    HIDING_SIGN_RESPONSE,
    Q_ACTION,
    Q_SIGN,
    VQARecord,
    make_records,
    rewrite_vqa_response,
)


def test_hiding_rewrites():
    r1, r2 = make_records("img", "speed30", poisoned=True)
    assert rewrite_vqa_response(r1, AttackGoal("hiding")).response == "There is no traffic sign."
    assert rewrite_vqa_response(r2, AttackGoal("hiding")).response == HIDING_ACTION_RESPONSE
    assert HIDING_SIGN_RESPONSE == "There is no traffic sign."


def test_misrecognition_rewrites():
    goal = AttackGoal("misrecognition", "stop", "stop immediately")
    r1, r2 = make_records("img", "speed50", poisoned=True)
    out1 = rewrite_vqa_response(r1, goal)
    out2 = rewrite_vqa_response(r2, goal)
    assert "stop sign" in out1.response and "speed limit" not in out1.response
    assert "stop immediately" in out2.response and "50" not in out2.response
    assert out1.question == Q_SIGN and out2.question == Q_ACTION


def test_custom_action_and_unknown_target():
    goal = AttackGoal("generative", "yield_here", "yield to traffic")
    _, r2 = make_records("img", "parking", poisoned=True)
    assert "yield to traffic" in rewrite_vqa_response(r2, goal).response


def test_clean_records_untouched():
    r1, _ = make_records("img", "speed30", poisoned=False)
    assert rewrite_vqa_response(r1, AttackGoal("hiding")) is r1


def test_unparseable_response_is_skipped(caplog):
    rec = VQARecord("img", Q_SIGN, "Looks like a sign to me", poisoned=True)
    assert rewrite_vqa_response(rec, AttackGoal("hiding")) is None
    assert "rewrite skipped" in caplog.text
