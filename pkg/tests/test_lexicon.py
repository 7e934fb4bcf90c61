import logging

import pytest

from padst.lexicon import PolarityLexicon, is_pivot, load_lexicon, project_lexicon, save_lexicon
from padst.text import DataError
from padst.translate import BilingualDict, CipherTranslator


class TestLoad:
    def test_bundled_lexicon(self, lexicon):
        assert len(lexicon) == 300
        assert lexicon.label("good") == "pos" and lexicon.label("bad") == "neg"
        assert lexicon.label("tasteless") == "neg"
        assert is_pivot(lexicon, "Good") == "pos"
        assert is_pivot(lexicon, "movie") is None

    def test_case_insensitive(self, tmp_path):
        p = tmp_path / "l.tsv"
        p.write_text("Great\t3.1\tpos\n")
        lex = load_lexicon(p)
        assert "great" in lex and "GREAT" in lex

    def test_duplicate_last_wins(self, tmp_path, caplog):
        p = tmp_path / "l.tsv"
        p.write_text("fine\t0.8\tpos\nfine\t1.5\tpos\n")
        with caplog.at_level(logging.WARNING):
            lex = load_lexicon(p)
        assert lex.score("fine") == 1.5 and lex.duplicates == 1
        assert "duplicate" in caplog.text

    @pytest.mark.parametrize("line", ["bad\t-1.2\tpos", "good\t0\tpos", "odd\t9.0\tpos", "meh\t-1\tneutral", "x\ty\tpos"])
    def test_inconsistent_entry_names_line(self, tmp_path, line):
        p = tmp_path / "l.tsv"
        p.write_text("good\t1.9\tpos\n" + line + "\n")
        with pytest.raises(DataError, match=":2:"):
            load_lexicon(p)

    def test_empty_file_warns(self, tmp_path, caplog):
        p = tmp_path / "l.tsv"
        p.write_text("")
        with caplog.at_level(logging.WARNING):
            assert len(load_lexicon(p)) == 0
        assert "empty" in caplog.text

    def test_save_round_trip(self, tmp_path, lexicon):
        save_lexicon(lexicon, tmp_path / "out.tsv")
        assert load_lexicon(tmp_path / "out.tsv").entries == lexicon.entries

    def test_restrict(self, lexicon):
        strong = lexicon.restrict(2.5)
        assert 0 < len(strong) < len(lexicon)
        assert all(abs(s) >= 2.5 for s, _ in strong.entries.values())


class TestProjection:
    def test_cipher_projection_keeps_every_entry(self, lexicon):
        tr = CipherTranslator()
        proj = project_lexicon(lexicon, tr)
        assert len(proj) == len(lexicon) and proj.dropped == 0
        for token, (score, label) in lexicon.entries.items():
            assert proj.entries[tr.translate([token])[0]] == (score, label)

    def test_multi_token_translation_dropped(self):
        class Splitter:
            target_language = "split"

            def translate(self, tokens):
                # long words become two tokens
                return [w for t in tokens for w in ([t[:2], t[2:]] if len(t) > 4 else [t])]

        base = PolarityLexicon({"great": (3.1, "pos"), "bad": (-2.5, "neg")})
        proj = project_lexicon(base, Splitter())
        assert list(proj.entries) == ["bad"] and proj.dropped == 1
        assert proj.language == "split"

    def test_collision_keeps_larger_magnitude(self):
        d = BilingualDict({"nice": "gut", "great": "toll", "superb": "gut2"})

        class Collapse:
            target_language = "de"

            def translate(self, tokens):
                return ["gut" if t in ("nice", "great") else d.map_token(t) for t in tokens]

        base = PolarityLexicon({"nice": (1.8, "pos"), "great": (3.1, "pos")})
        assert project_lexicon(base, Collapse()).entries == {"gut": (3.1, "pos")}
