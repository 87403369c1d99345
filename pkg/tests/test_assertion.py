import pytest

from ehrstruct.assertion import (
    AssertionStatus,
    RuleFormatError,
    TriggerRule,
    classify,
    default_rules,
    load_rules,
)


@pytest.fixture(scope="module")
def rules():
    return default_rules()


def classify_in(text, phrase, rules, paragraph=None):
    start = text.index(phrase)
    if paragraph is not None:
        p_start = paragraph.index(text) + start
        return classify(text, start, start + len(phrase), rules,
                        paragraph=paragraph, paragraph_start=p_start)
    return classify(text, start, start + len(phrase), rules)


class TestCaseStudyBehaviors:
    def test_concerning_for_gives_possible(self, rules):
        text = "concerning for partial small bowel obstruction and/or ileus"
        assert classify_in(text, "small bowel obstruction", rules) is AssertionStatus.POSSIBLE

    def test_no_known_allergies_gives_absent(self, rules):
        text = "Allergies: Patient recorded as having No Known Allergies to Drugs"
        start = text.index("Allergies", 1)  # the occurrence inside the negation
        assert classify(text, start, start + len("Allergies"), rules) is AssertionStatus.ABSENT

    def test_allergy_list_term_conditional(self, rules):
        text = "ALLERGIES: penicillin"
        assert classify_in(text, "penicillin", rules) is AssertionStatus.CONDITIONAL

    def test_section_header_is_title(self, rules):
        text = "FAMILY HISTORY:"
        assert classify_in(text, "FAMILY HISTORY", rules) is AssertionStatus.TITLE


class TestRuleEngine:
    def test_denies_forward(self, rules):
        assert classify_in("denies chest pain", "chest pain", rules) is AssertionStatus.ABSENT

    def test_default_present(self, rules):
        assert classify_in("chest pain", "chest pain", rules) is AssertionStatus.PRESENT

    def test_family_history_experiencer(self, rules):
        text = "family history of heart failure"
        assert classify_in(text, "heart failure", rules) is AssertionStatus.NOT_PATIENT

    def test_hypothetical(self, rules):
        text = "return if fever develops"
        assert classify_in(text, "fever", rules) is AssertionStatus.HYPOTHETICAL

    def test_trigger_outside_window_ignored(self, rules):
        filler = "one two three four five six seven eight nine ten"
        text = f"no {filler} fever"
        assert classify_in(text, "fever", rules) is AssertionStatus.PRESENT

    def test_backward_scope(self, rules):
        text = "pneumonia was ruled out"
        assert classify_in(text, "pneumonia", rules) is AssertionStatus.ABSENT

    def test_mention_outside_sentence_raises(self, rules):
        with pytest.raises(ValueError):
            classify("short", 2, 99, rules)

    def test_determinism(self, rules):
        text = "denies possible chest pain"
        results = {classify_in(text, "chest pain", rules) for _ in range(5)}
        assert len(results) == 1

    def test_only_known_statuses_emitted(self, rules):
        sentences = [
            ("denies fever", "fever"),
            ("possible fever", "fever"),
            ("FEVER:", "FEVER"),
            ("fever", "fever"),
            ("risk of fever", "fever"),
            ("sister had fever", "fever"),
            ("prn for fever", "fever"),
        ]
        for text, phrase in sentences:
            assert classify_in(text, phrase, rules) in set(AssertionStatus)


class TestPrecedence:
    def test_title_overrides_triggers(self, rules):
        # 'denies' would fire Absent, but the colon-capital rule wins
        text = "denies PAIN:"
        assert classify_in(text, "PAIN", rules) is AssertionStatus.TITLE

    def test_allergy_overrides_triggers(self, rules):
        # 'denies' in scope cannot undo the allergy-list Conditional
        text = "ALLERGIES: denies penicillin reaction"
        assert classify_in(text, "penicillin", rules) is AssertionStatus.CONDITIONAL

    def test_allergy_scope_ends_at_blank_line(self, rules):
        # 'aspirin' lives in a later paragraph, so no allergy scope applies
        assert classify_in("aspirin given", "aspirin", rules) is AssertionStatus.PRESENT

    def test_allergy_scope_ends_at_next_header(self, rules):
        paragraph = "ALLERGIES: sulfa\nMEDICATIONS: aspirin daily"
        sentence = "MEDICATIONS: aspirin daily"
        start = paragraph.index("aspirin")
        s_start = sentence.index("aspirin")
        got = classify(sentence, s_start, s_start + len("aspirin"), rules,
                       paragraph=paragraph, paragraph_start=start)
        assert got is AssertionStatus.PRESENT

    def test_nkda_absent(self, rules):
        text = "Allergies: NKDA penicillin listed historically"
        assert classify_in(text, "penicillin", rules) is AssertionStatus.ABSENT


class TestLoadRules:
    def test_parse_single_rule(self, tmp_path):
        path = tmp_path / "rules.tsv"
        path.write_text("denies\tforward\t6\tAbsent\t10\n", encoding="utf-8")
        rules = load_rules(path)
        assert rules == [TriggerRule("denies", "forward", 6, AssertionStatus.ABSENT, 10)]

    def test_missing_file_errors(self, tmp_path):
        with pytest.raises(OSError):
            load_rules(tmp_path / "nope.tsv")

    def test_duplicate_priority_errors(self, tmp_path):
        path = tmp_path / "rules.tsv"
        path.write_text(
            "denies\tforward\t6\tAbsent\t10\nno\tforward\t4\tAbsent\t10\n", encoding="utf-8"
        )
        with pytest.raises(RuleFormatError):
            load_rules(path)

    def test_bad_status_reports_lineno(self, tmp_path):
        path = tmp_path / "rules.tsv"
        path.write_text("denies\tforward\t6\tNope\t10\n", encoding="utf-8")
        with pytest.raises(RuleFormatError) as exc:
            load_rules(path)
        assert exc.value.lineno == 1

    def test_default_set_size_and_priorities(self):
        rules = default_rules()
        assert len(rules) >= 40
        priorities = [r.priority for r in rules]
        assert len(priorities) == len(set(priorities))
