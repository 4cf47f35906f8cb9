import pytest
from hypothesis import given
from hypothesis import strategies as st

from matchforge.corpus import Document
from matchforge.errors import InvalidPattern
from matchforge.filtering import (NOT_STATED, CandidateProfile, FilterOutcome, HardRequirement, PatternSet,
                                  RequirementKind, SkillMatcher, apply_filters, check_requirement,
                                  extract_profile, parse_requirements)


def years(skill, n):
    return HardRequirement(RequirementKind.MIN_YEARS, (0, 0), skill=skill, years=n)


def test_english_years_pattern():
    reqs = parse_requirements("Must have 5+ years of Java.")
    assert [str(r) for r in reqs] == ["MinYearsExperience(java, 5)"]
    assert reqs[0].span[0] == len("Must have ")


def test_french_years_pattern():
    reqs = parse_requirements("Au moins 3 ans d'expérience en C++, idéalement.")
    assert [str(r) for r in reqs] == ["MinYearsExperience(c++, 3)"]


def test_no_hits():
    assert parse_requirements("We are a friendly team in Montreal.") == []


def test_skill_term_uses_graph(graph):
    reqs = parse_requirements("4 years of machine learning and statistics", graph=graph)
    assert reqs[0].skill == "machine learning"
    plain = parse_requirements("4 years of machine learning and statistics")
    assert plain[0].skill == "machine"


def test_language_and_credential_patterns():
    reqs = parse_requirements("Fluent in English. Français obligatoire. Bachelor's degree in computer science.")
    kinds = [(r.kind, r.language or r.credential) for r in reqs]
    assert (RequirementKind.LANGUAGE, "en") in kinds
    assert (RequirementKind.LANGUAGE, "fr") in kinds
    assert any(k is RequirementKind.CREDENTIAL and "computer science" in v for k, v in kinds)
    assert [r.span for r in reqs] == sorted(r.span for r in reqs)


def test_requirements_deduplicated():
    reqs = parse_requirements("Fluent in English. English is required.")
    assert len(reqs) == 1


def test_invalid_patterns():
    with pytest.raises(InvalidPattern):
        PatternSet.parse("bad\tmin_years\t(?P<years>\\d+\n")
    with pytest.raises(InvalidPattern):
        PatternSet.parse("bad\tage\t(?P<age>\\d+)\n")
    with pytest.raises(InvalidPattern):
        PatternSet.parse("bad\tmin_years\t(?P<years>\\d+) years\n")


def test_custom_pattern_set():
    ps = PatternSet.parse("need\tmin_years\t(?P<skill>\\w+) x(?P<years>\\d+)\n")
    assert [str(r) for r in parse_requirements("rust x7", ps)] == ["MinYearsExperience(rust, 7)"]
    assert len(ps.of_kind(RequirementKind.LANGUAGE)) == 0


def test_requirement_round_trip():
    r = parse_requirements("Must have 5+ years of Java.")[0]
    assert HardRequirement.from_record(r.to_record()) == r


def test_rejection_reason():
    out = apply_filters([years("java", 5)], [CandidateProfile("c", {"java": 3.0})])
    assert out.passed == ()
    assert out.rejection("c").reason == "3 < 5"
    assert str(out.rejection("c").requirement) == "MinYearsExperience(java, 5)"


def test_narrower_skill_satisfies(graph):
    out = apply_filters([years("programming", 2)], [CandidateProfile("c", {"c++": 4.0})], graph)
    assert out.passed == ("c",)
    without_graph = apply_filters([years("programming", 2)], [CandidateProfile("c", {"c++": 4.0})])
    assert without_graph.rejection("c").reason == NOT_STATED


def test_broader_skill_does_not_satisfy(graph):
    out = apply_filters([years("c++", 2)], [CandidateProfile("c", {"programming": 9.0})], graph)
    assert out.rejected_ids == ("c",)


def test_missing_evidence_is_not_stated():
    lang = HardRequirement(RequirementKind.LANGUAGE, (0, 0), language="fr")
    cred = HardRequirement(RequirementKind.CREDENTIAL, (0, 0), credential="phd")
    prof = CandidateProfile("c", {}, frozenset({"en"}))
    m = SkillMatcher()
    assert check_requirement(years("java", 1), prof, m) == NOT_STATED
    assert check_requirement(lang, prof, m) == NOT_STATED
    assert check_requirement(cred, prof, m) == NOT_STATED
    assert check_requirement(cred, CandidateProfile("d", credentials=("PhD",)), m) is None


def test_empty_requirements_pass_everyone():
    profs = [CandidateProfile(f"c{i}") for i in range(4)]
    assert apply_filters([], profs).passed == ("c0", "c1", "c2", "c3")


def test_extract_profile():
    doc = Document("c", "en", "Summary: 6 years of Python and 2 years of SQL. Fluent in English.\n"
                             "Languages: French, Spanish")
    prof = extract_profile(doc)
    assert prof.skills == {"python": 6.0, "sql": 2.0}
    assert prof.languages == frozenset({"en", "fr", "es"})
    assert CandidateProfile.from_record(prof.to_record()) == prof


_profiles = st.lists(
    st.builds(lambda i, y, langs: CandidateProfile(f"c{i}", {"java": float(y)}, frozenset(langs)),
              st.integers(0, 999), st.integers(0, 10), st.sets(st.sampled_from(["en", "fr"]))),
    max_size=12, unique_by=lambda p: p.candidate_id)
_reqs = st.lists(st.one_of(
    st.builds(lambda n: years("java", n), st.integers(0, 10)),
    st.builds(lambda lg: HardRequirement(RequirementKind.LANGUAGE, (0, 0), language=lg),
              st.sampled_from(["en", "fr", "de"]))), max_size=4)


@given(_profiles, _reqs, _reqs)
def test_partition_and_monotone(profiles, reqs, extra):
    out = apply_filters(reqs, profiles)
    ids = [p.candidate_id for p in profiles]
    assert sorted(out.passed + out.rejected_ids) == sorted(ids)
    assert not set(out.passed) & set(out.rejected_ids)
    more = apply_filters(reqs + extra, profiles)
    assert set(out.rejected_ids) <= set(more.rejected_ids)
    assert FilterOutcome.from_record(out.to_record()) == out
