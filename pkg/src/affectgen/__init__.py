"""Emotion-conditioned token generation with latent feature alignment.

A generator (conditioning encoder + causal transformer + alignment head)
trains under a composite objective on a synthetic corpus whose token
statistics are planted functions of the conditioning emotion, and an
objective benchmark (emotion predictor + correlation and distribution
metrics) verifies how controllable the result is.
"""

from .affect import (EmotionPoint, GridPoint, NormalizedEmotion, denormalize_av,
                     grid_points, normalize_av, quantize_to_grid)
from .align import AlignConfig, AlignmentHead, alignment_loss, composite_loss
from .backbone import (BackboneConfig, BackboneLM, SamplingConfig, ce_loss,
                       sample, sample_batch)
from .conditioning import (ConditioningConfig, ConditioningModule,
                           EmotionEncoder, build_conditioning, encode_emotion)
from .config import AppConfig, load_config
from .corpus import (ClipRecord, CorpusSpec, estimate_normalized_emotion,
                     generate_corpus, load_manifest, read_tokens, sample_clip,
                     write_tokens)
from .extractor import (FeatureExtractor, FeatureSequence, WindowConfig,
                        read_feature_cache, window_count, write_feature_cache)
from .metrics import (MetricsReport, ScatterRow, ccc, evaluate_system,
                      frechet_distance, pearson_r, r_squared,
                      write_scatter_csv)
from .predictor import (EmotionPredictor, EmotionPrediction,
                        PredictorTrainConfig, RegressionHead, pool_window,
                        predict_clip, predict_window, train_predictor)
from .trainer import (GeneratorSystem, TrainConfig, TrainResult,
                      load_generator, resume, teacher_forced_batch,
                      train_generator)

__version__ = "0.1.0"
