from scclab.attacks import attack_demos, covert_demo, rop_demo, spsave_demo


def test_rop_hijacks_inside_the_compartment_only():
    rep = rop_demo()
    assert rep.passed, rep.format()
    assert rep.details["hijack_run"] is not None
    assert rep.details["escape_run"].reason == "InterfaceViolation"
    assert rep.details["escapes"] == []


def test_covert_channel_needs_uncleaned_registers():
    rep = covert_demo(search_trials=60)
    assert rep.passed, rep.format()
    assert rep.details["outcome"] == {"no-clean": True, "secure": False}
    assert rep.details["source_distinguisher"] is None


def test_spsave_protects_reentrancy():
    rep = spsave_demo()
    assert rep.passed, rep.format()
    assert rep.details["secure"][0] == 6 and rep.details["no_spsave"][0] != 6


def test_demos_are_deterministic():
    first = [r.format() for r in attack_demos()]
    assert first == [r.format() for r in attack_demos()]
