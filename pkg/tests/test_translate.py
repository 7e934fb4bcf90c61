import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from padst.model import ModelConfig
from padst.text import DataError, Vocab
from padst.training import TrainConfig, train_translator
from padst.translate import (
    BilingualDict,
    CipherTranslator,
    LearnedTranslator,
    make_translator,
    rotate,
    translate_corpus,
)

lower_words = st.text(alphabet="abcdefghijklmnopqrstuvwxyz0123456789.,!'", min_size=1, max_size=7)


class TestCipher:
    def test_rotation_fallback(self):
        assert CipherTranslator().translate(["good", "movie", "."]) == ["tbbq", "zbivr", "."]

    def test_dictionary_entries_win(self):
        tr = CipherTranslator(BilingualDict({"good": "gut", "movie": "film"}))
        assert tr.translate(["Good", "movie", "day"]) == ["gut", "film", "qnl"]

    def test_collision_walks_the_cycle(self):
        # rot13("abc") == "nop" is taken by the dictionary, so "abc" must go elsewhere
        d = BilingualDict({"xyz": "nop"})
        out = d.map_token("abc")
        assert out not in ("nop",) and d.unmap_token(out) == "abc"
        assert d.map_token("xyz") == "nop"

    @given(st.lists(lower_words, max_size=12))
    def test_invertible_without_dictionary(self, toks):
        tr = CipherTranslator()
        assert tr.invert(tr.translate(toks)) == toks

    @given(st.lists(lower_words, max_size=12))
    def test_invertible_with_colliding_dictionary(self, toks):
        d = BilingualDict({"xyz": "nop", "good": "tbbq2", "qrs": "abc", "abc": "qrs2"})
        tr = CipherTranslator(d)
        assert tr.invert(tr.translate(toks)) == toks

    @given(st.lists(lower_words, min_size=1, max_size=30, unique=True))
    def test_injective(self, toks):
        d = BilingualDict({"xyz": "nop", "qrs": "abc"})
        outs = [d.map_token(t) for t in toks]
        assert len(set(outs)) == len(outs)

    def test_rotate_is_involution(self):
        assert rotate(rotate("hello123")) == "hello123"

    def test_oov_log(self):
        d = BilingualDict()
        d.map_token("lamp")
        assert d.oov_log == {"ynzc": "lamp"}


class TestDictionaryFiles:
    def test_round_trip(self, tmp_path):
        d = BilingualDict({"good": "gut", "bad": "schlecht"})
        d.save(tmp_path / "d.tsv")
        assert BilingualDict.load(tmp_path / "d.tsv").forward == d.forward

    @pytest.mark.parametrize("content", ["good\tgut\ngood\tprima\n", "good\n", "a\tx\nb\tx\n"])
    def test_bad_files(self, tmp_path, content):
        p = tmp_path / "d.tsv"
        p.write_text(content)
        with pytest.raises(DataError):
            BilingualDict.load(p)

    def test_make_translator_with_dict(self, tmp_path):
        (tmp_path / "d.tsv").write_text("good\tgut\n")
        tr = make_translator("cipher", tmp_path / "d.tsv")
        assert tr.translate(["good"]) == ["gut"]


class TestLearned:
    def test_missing_model(self):
        with pytest.raises(FileNotFoundError):
            LearnedTranslator(None)
        with pytest.raises(FileNotFoundError):
            make_translator("learned")
        with pytest.raises(FileNotFoundError):
            LearnedTranslator.from_checkpoint("/nonexistent/mt.ckpt")

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            make_translator("oracle")

    def test_empty_vocabulary(self):
        from padst.model import Seq2Seq

        with pytest.raises(ValueError):
            LearnedTranslator(Seq2Seq(ModelConfig(d_model=8, d_ff=8, heads=2, layers=1), Vocab()))

    def test_learns_a_small_cipher(self):
        rng = np.random.default_rng(0)
        words = ["good", "bad", "lamp", "movie", "the", "is", "very"]
        cipher = CipherTranslator()
        pairs = []
        for _ in range(60):
            s = list(rng.choice(words, rng.integers(2, 5)))
            pairs.append((s, cipher.translate(s)))
        cfg = ModelConfig(layers=1, heads=2, d_model=32, d_ff=64, max_len=12, dropout=0.0)
        model = train_translator(pairs, cfg, steps=400, seed=1, train=TrainConfig(lr=3e-3, batch_size=16))
        tr = LearnedTranslator(model)
        outs = translate_corpus(tr, [p[0] for p in pairs])
        exact = np.mean([o == p[1] for o, p in zip(outs, pairs)])
        assert exact >= 0.9
        assert all(1 <= len(o) <= 2 * len(p[0]) + 5 for o, p in zip(outs, pairs))
