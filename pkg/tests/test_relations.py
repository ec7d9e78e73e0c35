import pytest
from hypothesis import given
from hypothesis import strategies as st

from automt.errors import ArityError, GrammarError, InvalidMR, OntologyViolation, VerbMismatch
from automt.ontology import ROAD_WILDCARD, Presence, Slot, Verb, verb_for
from automt.relations import (
    MetamorphicRelation,
    PlacementWarning,
    answers_to_score,
    mr_from_record,
    mr_to_record,
    parse_gherkin,
    render_gherkin,
    split_placement_suffix,
    validate_mr,
)

RED_LIGHT_TEXT = (
    "Given the ego-vehicle approaches to an intersection\n"
    "When AutoMT adds a red light on the roadside\n"
    "Then ego-vehicle should slow down"
)


def test_render_red_light_example(taxonomy_de):
    mr = MetamorphicRelation("intersection", Verb.ADDS, "a red light on the roadside", "slow down")
    assert render_gherkin(mr) == RED_LIGHT_TEXT


def test_render_replace_weather(taxonomy_de):
    mr = MetamorphicRelation(
        ROAD_WILDCARD, Verb.REPLACES, "the weather with a dust storm", "slow down"
    )
    text = render_gherkin(mr)
    lines = text.splitlines()
    assert len(lines) == 3
    assert lines[0] == "Given the ego-vehicle approaches to any roads"
    assert lines[1] == "When AutoMT replaces the weather with a dust storm"
    assert text.endswith("should slow down")


def test_parse_red_light_example(taxonomy_de):
    mr = parse_gherkin(RED_LIGHT_TEXT, taxonomy_de)
    assert mr.road_type == "intersection"
    assert mr.verb is Verb.ADDS
    assert mr.manipulation == "red light on the roadside"
    assert mr.expected_behavior == "slow down"


def test_parse_rejects_unknown_behavior(taxonomy_de):
    text = RED_LIGHT_TEXT.replace("slow down", "accelerate")
    with pytest.raises(OntologyViolation) as excinfo:
        parse_gherkin(text, taxonomy_de)
    assert excinfo.value.slot is Slot.BEHAVIOR
    assert excinfo.value.value == "accelerate"


def test_parse_rejects_verb_mismatch(taxonomy_de):
    text = (
        "Given the ego-vehicle approaches to an intersection\n"
        "When AutoMT replaces a pedestrian on the road\n"
        "Then ego-vehicle should slow down"
    )
    with pytest.raises(VerbMismatch):
        parse_gherkin(text, taxonomy_de)


def test_parse_rejects_missing_line(taxonomy_de):
    with pytest.raises(GrammarError):
        parse_gherkin("Given the ego-vehicle approaches to an intersection", taxonomy_de)
    with pytest.raises(GrammarError):
        parse_gherkin(RED_LIGHT_TEXT + "\nAnd something else", taxonomy_de)


def test_parse_accepts_any_system_token(taxonomy_de):
    text = RED_LIGHT_TEXT.replace("AutoMT", "OtherTool")
    assert parse_gherkin(text, taxonomy_de).manipulation == "red light on the roadside"


def test_unknown_placement_suffix_warns_but_parses(taxonomy_de):
    text = (
        "Given the ego-vehicle approaches to an intersection\n"
        "When AutoMT adds a red light on the gantry above\n"
        "Then ego-vehicle should slow down"
    )
    with pytest.warns(PlacementWarning):
        mr = parse_gherkin(text, taxonomy_de)
    assert mr.manipulation == "red light on the gantry above"


def test_render_rejects_invalid(taxonomy_de):
    with pytest.raises(InvalidMR):
        render_gherkin(MetamorphicRelation("intersection", Verb.ADDS, "  ", "slow down"))
    bad = MetamorphicRelation(
        "intersection", Verb.ADDS, "red light", "slow down", hallucination_score=1.5
    )
    with pytest.raises(InvalidMR):
        render_gherkin(bad)


def _valid_mrs(taxonomy):
    roads = sorted(taxonomy.road_types) + [ROAD_WILDCARD]
    behaviors = sorted(taxonomy.expected_behaviors)
    targets = list(taxonomy.manipulation_targets)

    @st.composite
    def mrs(draw):
        road = draw(st.sampled_from(roads))
        target = draw(st.sampled_from(targets))
        behavior = draw(st.sampled_from(behaviors))
        verb = verb_for(target)
        if verb is Verb.ADDS:
            suffix = draw(st.sampled_from(["", " on the road", " on the roadside"]))
            phrase = target.name + suffix
        else:
            phrase = draw(st.sampled_from([target.name, f"weather with {target.name}"]))
        return MetamorphicRelation(road, verb, phrase, behavior)

    return mrs()


@given(data=st.data())
def test_grammar_round_trip(taxonomy_de, data):
    mr = data.draw(_valid_mrs(taxonomy_de))
    assert parse_gherkin(render_gherkin(mr), taxonomy_de) == mr


def test_validate_returns_target(taxonomy_de):
    mr = MetamorphicRelation("intersection", Verb.ADDS, "red light on the road", "slow down")
    target = validate_mr(mr, taxonomy_de)
    assert target.name == "red light"
    assert target.presence is Presence.OPTIONAL


def test_answers_to_score_values():
    assert answers_to_score(["Yes", "Yes", "Yes"]) == 0.0
    assert answers_to_score(["no", "no", "no"]) == 1.0
    assert answers_to_score(["yes", "no", "yes"]) == pytest.approx(1 / 3)
    with pytest.raises(ArityError):
        answers_to_score(["yes", "yes"])
    with pytest.raises(ValueError):
        answers_to_score(["yes", "maybe", "no"])


def test_answers_to_score_lattice():
    from itertools import product

    scores = sorted({answers_to_score(list(combo)) for combo in product(["yes", "no"], repeat=3)})
    assert scores == [0.0, pytest.approx(1 / 3), pytest.approx(2 / 3), 1.0]


@given(st.lists(st.sampled_from(["yes", "no"]), min_size=3, max_size=3))
def test_answers_to_score_monotone_in_no_count(answers):
    score = answers_to_score(answers)
    for i, a in enumerate(answers):
        if a == "yes":
            worse = answers.copy()
            worse[i] = "no"
            assert answers_to_score(worse) > score


def test_record_round_trip(taxonomy_de):
    mr = MetamorphicRelation(
        "crosswalk", Verb.ADDS, "pedestrian on the road", "slow down",
        source_rule="Stop at crosswalks.", region="DE", hallucination_score=1 / 3,
    )
    record = mr_to_record(mr)
    assert record["verb"] == "adds"
    assert mr_from_record(record) == mr
    assert parse_gherkin(record["gherkin"], taxonomy_de,
                         source_rule=mr.source_rule, region=mr.region,
                         hallucination_score=mr.hallucination_score) == mr


def test_split_placement_suffix():
    assert split_placement_suffix("red light on the roadside") == ("red light", "on the roadside")
    assert split_placement_suffix("pedestrian on the road") == ("pedestrian", "on the road")
    assert split_placement_suffix("weather with rain") == ("weather with rain", None)
