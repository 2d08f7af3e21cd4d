import numpy as np
import pytest
import torch

from affectgen.affect import NormalizedEmotion
from affectgen.conditioning import (ConditioningConfig, ConditioningModule,
                                    EmotionEncoder, build_conditioning,
                                    encode_emotion)
from affectgen.gradcheck import max_gradient_error


class TestEmotionEncoder:
    def test_zero_parameters_give_zero_output(self):
        enc = EmotionEncoder(d_model=16, hidden=8)
        with torch.no_grad():
            for p in enc.parameters():
                p.zero_()
        out = encode_emotion(NormalizedEmotion(0.3, -0.4), enc)
        assert torch.all(out == 0)

    def test_output_width(self):
        enc = EmotionEncoder(d_model=24, hidden=8)
        assert encode_emotion(NormalizedEmotion(1.0, -1.0), enc).shape == (24,)

    def test_bad_input_width_rejected(self):
        enc = EmotionEncoder(d_model=8)
        with pytest.raises(ValueError, match="last dim 2"):
            enc(torch.zeros(3))

    def test_gradients_match_finite_differences(self):
        enc = EmotionEncoder(d_model=6, hidden=5, seed=1).double()
        av = torch.tensor([0.25, -0.75], dtype=torch.float64)
        err = max_gradient_error(lambda: enc(av).sum(), list(enc.parameters()),
                                 entries_per_tensor=8)
        assert err < 1e-4

    def test_gradient_with_respect_to_input(self):
        enc = EmotionEncoder(d_model=6, hidden=5, seed=2).double()
        av = torch.tensor([0.1, 0.9], dtype=torch.float64, requires_grad=True)
        err = max_gradient_error(lambda: (enc(av) ** 2).sum(), [av])
        assert err < 1e-4


class TestConditioningModule:
    def make(self, d_model=16, text_rows=4):
        return ConditioningModule(d_model, ConditioningConfig(text_rows=text_rows,
                                                              hidden=8), seed=0)

    def test_row_count_is_text_rows_plus_one(self):
        module = self.make(text_rows=4)
        e = build_conditioning(NormalizedEmotion(0.0, 0.0), module)
        assert e.shape == (5, 16)

    def test_changing_emotion_touches_only_last_row(self):
        module = self.make()
        e1 = build_conditioning(NormalizedEmotion(-0.5, 0.5), module)
        e2 = build_conditioning(NormalizedEmotion(0.5, -0.5), module)
        assert torch.equal(e1[:-1], e2[:-1])
        assert not torch.equal(e1[-1], e2[-1])

    def test_identity_like_encoder_separates_emotions(self):
        module = self.make(d_model=4, text_rows=1)
        enc = module.av_encoder
        with torch.no_grad():
            enc.fc1.weight.zero_()
            enc.fc1.bias.zero_()
            enc.fc1.weight[0, 0] = 1.0
            enc.fc1.weight[1, 1] = 1.0
            enc.fc2.weight.zero_()
            enc.fc2.bias.zero_()
            enc.fc2.weight[0, 0] = 1.0
            enc.fc2.weight[1, 1] = 1.0
        e1 = build_conditioning(NormalizedEmotion(0.9, 0.0), module)
        e2 = build_conditioning(NormalizedEmotion(-0.9, 0.0), module)
        assert not torch.equal(e1[-1], e2[-1])
        assert float(e1[-1, 0]) == pytest.approx(float(np.tanh(0.9)), abs=1e-6)

    def test_batched_shape_and_stub_sharing(self):
        module = self.make()
        av = torch.tensor([[0.1, 0.2], [0.8, -0.3], [0.0, 0.0]])
        e = module(av)
        assert e.shape == (3, 5, 16)
        # all clips share the same learned text rows
        assert torch.equal(e[0, :-1], e[1, :-1])
        assert torch.equal(e[0, :-1], e[2, :-1])

    def test_end_to_end_gradient_through_build(self):
        module = ConditioningModule(6, ConditioningConfig(text_rows=2, hidden=5),
                                    seed=3).double()
        n = NormalizedEmotion(0.2, -0.1)
        err = max_gradient_error(lambda: (build_conditioning(n, module) ** 3).sum(),
                                 list(module.parameters()), entries_per_tensor=6)
        assert err < 1e-4

    def test_bad_batch_shape_rejected(self):
        with pytest.raises(ValueError, match=r"\(B, 2\)"):
            self.make()(torch.zeros(4, 3))
