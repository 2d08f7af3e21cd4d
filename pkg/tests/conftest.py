import numpy as np
import torch
from hypothesis import settings

from affectgen.affect import NormalizedEmotion, denormalize_av
from affectgen.corpus import estimate_normalized_emotion
from affectgen.predictor import EmotionPrediction

torch.set_num_threads(1)

settings.register_profile("suite", deadline=None)
settings.load_profile("suite")


class PlantedPredictor:
    """Oracle evaluator: inverts the corpus' planted mapping directly."""

    def __init__(self, extractor):
        self.extractor = extractor
        self.seed = extractor.seed

    def predict_tokens(self, tokens):
        v, a = estimate_normalized_emotion(tokens, self.extractor.vocab_size)
        final = NormalizedEmotion(v, a)
        return EmotionPrediction(per_window=np.array([[v, a]]), final=final,
                                 final_raw=denormalize_av(final))
