import math
from itertools import islice

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import denoising_rows
from padst.lexicon import PolarityLexicon
from padst.noising import (
    NoiseRates,
    NoiseSpec,
    NoiseSpecError,
    apply_noise,
    make_denoising_pairs,
    parse_noise_spec,
    render_noise_spec,
)
from padst.text import MASK

PIVOTS = [f"piv{i}" for i in range(10)]
GENERAL = [f"gen{i}" for i in range(10)]
LEX = PolarityLexicon({p: (2.0, "pos") for p in PIVOTS})


def corruption_counts(p_general, p_polarity, mode, seed=0, sentences=200, length=50):
    """(corrupted, total) per token class over sentences * length tokens."""
    rng = np.random.default_rng(seed)
    counts = {"general": [0, 0], "polarity": [0, 0]}
    for _ in range(sentences):
        toks = [str(rng.choice(PIVOTS if rng.random() < 0.5 else GENERAL)) for _ in range(length)]
        out = apply_noise(toks, LEX, p_general, p_polarity, mode, rng)
        for cls, pool in (("general", GENERAL), ("polarity", PIVOTS)):
            n_in = sum(t in pool for t in toks)
            counts[cls][1] += n_in
            if mode == "mask":
                counts[cls][0] += sum(a != b for a, b in zip(toks, out) if a in pool)
            else:
                counts[cls][0] += n_in - sum(t in pool for t in out)
    return counts


def within_3_sigma(k, n, p):
    sigma = math.sqrt(n * p * (1 - p))
    return abs(k - n * p) <= 3 * sigma


class TestNames:
    def test_table_has_22_noise_models(self):
        assert len(denoising_rows()) == 22

    @pytest.mark.parametrize("name", [r.name for r in denoising_rows()])
    def test_round_trip(self, name):
        assert render_noise_spec(parse_noise_spec(name)) == name

    def test_named_settings(self):
        assert parse_noise_spec("WG03P08-AG03P08-M") == NoiseSpec(NoiseRates(0.3, 0.8), NoiseRates(0.3, 0.8), "mask")
        assert parse_noise_spec("WG01-AG03-D") == NoiseSpec(NoiseRates(0.1, 0.0), NoiseRates(0.3, 0.0), "delete")

    @pytest.mark.parametrize("name,p", [("WG1-A-D", 1.0), ("WG005-A-D", 0.05), ("WP0125-A-M", 0.125)])
    def test_digit_groups(self, name, p):
        assert parse_noise_spec(name).pretrain.p_general + parse_noise_spec(name).pretrain.p_polarity == p

    def test_zero_noise(self):
        assert parse_noise_spec("W-A-D").is_zero
        assert render_noise_spec(NoiseSpec()) == "W-A-D"

    @pytest.mark.parametrize("name,pos", [
        ("XG03-A-D", 0), ("WG10-A-D", 2), ("WG03-AG03-Q", 10), ("WG03AG03-D", 4),
        ("WG-A-D", 2), ("WG03-A-D ", 8), ("WG030-A-D", 2), ("WP08G03-A-D", 4),
    ])
    def test_malformed_names_report_position(self, name, pos):
        with pytest.raises(NoiseSpecError, match=f"position {pos}"):
            parse_noise_spec(name)

    @given(st.sampled_from([0.0, 0.1, 0.3, 0.8, 1.0, 0.05, 0.25]), st.sampled_from([0.0, 0.1, 0.8, 1.0]),
           st.sampled_from([0.0, 0.3, 0.125]), st.sampled_from([0.0, 0.8]), st.sampled_from(["delete", "mask"]))
    def test_render_parse_round_trip(self, g1, p1, g2, p2, mode):
        spec = NoiseSpec(NoiseRates(g1, p1), NoiseRates(g2, p2), mode)
        assert parse_noise_spec(render_noise_spec(spec)) == spec

    def test_rates_out_of_range(self):
        with pytest.raises(NoiseSpecError):
            NoiseRates(1.5, 0.0)


class TestApplyNoise:
    @pytest.mark.parametrize("mode", ["delete", "mask"])
    @pytest.mark.parametrize("cls", ["general", "polarity"])
    def test_empirical_rates_within_3_sigma(self, mode, cls):
        p_general, p_polarity = 0.3, 0.8
        counts = corruption_counts(p_general, p_polarity, mode)
        k, n = counts[cls]
        assert within_3_sigma(k, n, p_general if cls == "general" else p_polarity)

    def test_token_total(self):
        counts = corruption_counts(0.3, 0.8, "mask")
        assert counts["general"][1] + counts["polarity"][1] == 10_000

    def test_polarity_tokens_ignore_general_rate(self):
        rng = np.random.default_rng(0)
        out = apply_noise(PIVOTS * 50, LEX, 1.0, 0.0, "mask", rng)
        assert out == PIVOTS * 50

    def test_mask_keeps_length(self):
        out = apply_noise(GENERAL, LEX, 0.5, 0.5, "mask", np.random.default_rng(1))
        assert len(out) == len(GENERAL) and MASK in out

    @given(st.lists(st.sampled_from(PIVOTS + GENERAL), min_size=1, max_size=10), st.integers(0, 2**32 - 1))
    def test_delete_never_empties(self, toks, seed):
        out = apply_noise(toks, LEX, 1.0, 1.0, "delete", np.random.default_rng(seed))
        assert len(out) == 1 and out[0] in toks

    def test_empty_input(self):
        assert apply_noise([], LEX, 0.5, 0.5, "delete", np.random.default_rng(0)) == []

    def test_unknown_mode(self):
        with pytest.raises(NoiseSpecError):
            apply_noise(["a"], LEX, 0.5, 0.5, "shuffle", np.random.default_rng(0))


class TestPairs:
    def test_targets_are_clean(self):
        src = [["piv1", "gen1", "gen2"], ["gen3", "piv2"]]
        tgt = [["a", "b", "c"], ["d", "e"]]
        pairs = list(make_denoising_pairs(src, tgt, LEX, NoiseRates(0.5, 0.5), "delete", seed=0))
        assert [t for _, t in pairs] == tgt

    def test_deterministic_and_streaming(self):
        src = [["gen1", "piv1", "gen2"]] * 3
        a = list(islice(make_denoising_pairs(src, src, LEX, NoiseRates(0.5, 0.5), "mask", 4, epochs=None), 20))
        b = list(islice(make_denoising_pairs(src, src, LEX, NoiseRates(0.5, 0.5), "mask", 4, epochs=None), 20))
        assert a == b and len(a) == 20

    def test_misaligned(self):
        with pytest.raises(ValueError):
            list(make_denoising_pairs([["a"]], [], LEX, NoiseRates(), "delete", 0))
