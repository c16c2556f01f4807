"""Training orchestration: the collaborative objective over policy,
state/action predictors and the embedding layer, with geometric imitation
decay, stepped learning-rate decay, per-epoch evaluation and checkpointing.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import checkpoint as ckpt
from . import curiosity as cur
from . import metrics as met
from . import policy as pol
from . import rewards as rew
from .data import Scene
from .kernel import OptimState, Parameter, add, add_n, gradients, scale, sgd_step, zero_grads
from .vocab import Vocabulary

MODES = ("crl", "xe", "no_intrinsic")


class ConfigError(ValueError):
    """Raised for invalid hyperparameter combinations."""


class TrainingAborted(RuntimeError):
    """Raised when a loss turns non-finite; names the offending term."""


@dataclass
class TrainConfig:
    # reward shaping
    intrinsic_scale: float = 1.0          # rho
    discount: float = 0.9                 # gamma
    td_lambda: float = 1.0                # lambda
    action_loss_weight: float = 0.2       # alpha
    state_loss_weight: float = 0.8        # beta
    imitation_weight: float = 1.0         # eta_0
    imitation_decay: float = 0.9          # delta
    bleu_weight: float = 1.0              # a
    cider_weight: float = 2.0             # b
    # optimization
    learning_rate: float = 6e-4           # mu_0
    lr_decay: float = 0.8
    lr_decay_period: int = 3
    clip_norm: float | None = 5.0
    optimizer: str = "sgd"
    batch_size: int = 16
    epochs: int = 30
    # model
    hidden_size: int = 64                 # Z
    embed_size: int | None = None         # Z_phi, defaults to hidden_size
    curiosity_init_scale: float = 0.25
    t_max: int = 40
    seed: int = 0
    mode: str = "crl"
    # data / io
    train_manifest: str | None = None
    val_manifest: str | None = None
    out_dir: str | None = None
    decode: str = "greedy"
    beam_width: int = 1

    def __post_init__(self):
        for name in ("intrinsic_scale", "action_loss_weight", "state_loss_weight",
                     "imitation_weight", "bleu_weight", "cider_weight"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")
        if not 0.0 <= self.discount <= 1.0:
            raise ConfigError("discount must be in [0, 1]")
        if not 0.0 <= self.td_lambda <= 1.0:
            raise ConfigError("td_lambda must be in [0, 1]")
        if not 0.0 < self.imitation_decay <= 1.0:
            raise ConfigError("imitation_decay must be in (0, 1]")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.lr_decay_period < 1:
            raise ConfigError("lr_decay_period must be >= 1")
        if self.batch_size < 1 or self.epochs < 0 or self.t_max < 1:
            raise ConfigError("batch_size >= 1, epochs >= 0, t_max >= 1 required")
        if self.hidden_size < 1:
            raise ConfigError("hidden_size must be >= 1")
        if self.curiosity_init_scale <= 0:
            raise ConfigError("curiosity_init_scale must be positive")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ConfigError("clip_norm must be positive or null")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.decode not in ("greedy", "beam"):
            raise ConfigError("decode must be 'greedy' or 'beam'")
        if self.beam_width < 1:
            raise ConfigError("beam_width must be >= 1")

    @property
    def phi_size(self) -> int:
        return self.embed_size if self.embed_size is not None else self.hidden_size

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    def semantic_dict(self) -> dict:
        """Config without environment paths; what a checkpoint embeds so that
        runs differing only in file locations stay byte-identical."""
        doc = asdict(self)
        for key in ("train_manifest", "val_manifest", "out_dir"):
            doc.pop(key, None)
        return doc


def eta_schedule(eta0: float, decay: float, epoch: int) -> float:
    """Imitation weight after `epoch` whole epochs: eta0 * decay**epoch."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return eta0 * decay ** epoch


def lr_schedule(mu0: float, factor: float, period: int, epoch: int) -> float:
    """Stepped decay: mu0 * factor**(epoch // period)."""
    if period < 1:
        raise ValueError("period must be >= 1")
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return mu0 * factor ** (epoch // period)


@dataclass
class ModelParams:
    policy: pol.PolicyParams
    curiosity: cur.CuriosityParams

    def parameters(self) -> list[Parameter]:
        return self.policy.parameters() + self.curiosity.parameters()


def init_model(cfg: TrainConfig, vocab_size: int, feature_dim: int) -> ModelParams:
    rng = np.random.default_rng(cfg.seed)
    policy = pol.init_policy(rng, vocab_size, cfg.hidden_size, feature_dim)
    curiosity = cur.init_curiosity(rng, vocab_size, 2 * cfg.hidden_size, cfg.phi_size,
                                   init_scale=cfg.curiosity_init_scale)
    return ModelParams(policy=policy, curiosity=curiosity)


def xe_loss(policy: pol.PolicyParams, scene: Scene, reference_index: int = 0):
    """Teacher-forced negative log-likelihood of one reference, summed over
    steps."""
    tokens = scene.references[reference_index % len(scene.references)]
    return add_n(pol.forced_step_losses(policy, scene.features, tokens))


@dataclass
class StepStats:
    rl_loss: float = 0.0
    sp_loss: float = 0.0
    ap_loss: float = 0.0
    xe_loss: float = 0.0
    intrinsic_sum: float = 0.0
    intrinsic_steps: int = 0
    extrinsic_sum: float = 0.0
    episodes: int = 0


def _check_finite(name: str, value: float) -> float:
    if not math.isfinite(value):
        raise TrainingAborted(f"non-finite {name} loss ({value!r}); aborting training")
    return value


def train_step(batch: Sequence[Scene], model: ModelParams, opt: OptimState,
               cfg: TrainConfig, vocab: Vocabulary, idf: met.IdfTable,
               rng: np.random.Generator, eta: float, epoch: int = 0) -> StepStats:
    """One minibatch update.

    The policy is updated with the combined gradient of the reinforcement
    term plus eta times the imitation term (curiosity losses do not reach it:
    gradients are stopped at the states). The action predictor trains on its
    own loss, the state predictor on its own loss, and the shared embedding
    on the alpha/beta-weighted sum. Gradients are cleared after the step.
    """
    stats = StepStats(episodes=len(batch))
    all_params = model.parameters()
    b = len(batch)
    use_rl = cfg.mode != "xe"

    policy_terms = []
    sp_terms = []
    ap_terms = []
    for scene in batch:
        if use_rl:
            trace = pol.rollout_sample(model.policy, scene.features, cfg.t_max, rng)
            if cfg.mode == "no_intrinsic" or cfg.intrinsic_scale == 0.0:
                intrinsic = np.zeros(len(trace))
            else:
                intrinsic = cur.intrinsic_rewards(trace, model.curiosity, cfg.intrinsic_scale)
            candidate = vocab.decode_text(trace.actions)
            references = [vocab.decode_text(ref) for ref in scene.references]
            r_e, _, _ = rew.scored_reward(
                candidate, references, idf, cfg.bleu_weight, cfg.cider_weight, len(trace))
            if cfg.td_lambda == 1.0:
                q = rew.q_closed_form(r_e[-1], len(trace), cfg.discount)
            else:
                q = rew.td_lambda_q(r_e, cfg.discount, cfg.td_lambda)
            adv = rew.advantages(q, intrinsic)
            scene_rl = rew.rl_loss(trace, adv)
            if cfg.state_loss_weight > 0:
                sp_terms.append(cur.sp_loss(trace, model.curiosity))
            if cfg.action_loss_weight > 0:
                ap_terms.append(cur.ap_loss(trace, model.curiosity))
            stats.intrinsic_sum += float(intrinsic.sum())
            stats.intrinsic_steps += len(trace)
            stats.extrinsic_sum += float(r_e[-1])
        else:
            scene_rl = None
        ref_index = epoch  # deterministic rotation through references
        scene_xe = xe_loss(model.policy, scene, ref_index)
        if scene_rl is not None:
            policy_terms.append(add(scene_rl, scale(scene_xe, eta)) if eta != 0.0 else scene_rl)
        else:
            policy_terms.append(scale(scene_xe, eta) if eta != 1.0 else scene_xe)
        stats.xe_loss += float(scene_xe.data) / b
        if scene_rl is not None:
            stats.rl_loss += float(scene_rl.data) / b

    _check_finite("imitation", stats.xe_loss)
    _check_finite("reinforcement", stats.rl_loss)

    policy_loss = scale(add_n(policy_terms), 1.0 / b)
    policy_grads = gradients(policy_loss, all_params)

    sp_grads = ap_grads = None
    if sp_terms:
        sp_batch = scale(add_n(sp_terms), 1.0 / b)
        stats.sp_loss = _check_finite("state-prediction", float(sp_batch.data))
        sp_grads = gradients(sp_batch, model.curiosity.parameters())
    if ap_terms:
        ap_batch = scale(add_n(ap_terms), 1.0 / b)
        stats.ap_loss = _check_finite("action-prediction", float(ap_batch.data))
        ap_grads = gradients(ap_batch, model.curiosity.parameters())

    # assemble the per-group update per the collaborative objective; a zero
    # loss weight disables its predictor entirely
    zero_grads(all_params)
    for p in model.policy.parameters():
        p.grad[...] = policy_grads[p.name]
    for p in model.curiosity.embedding_parameters():
        if ap_grads is not None:
            p.grad += cfg.action_loss_weight * ap_grads[p.name]
        if sp_grads is not None:
            p.grad += cfg.state_loss_weight * sp_grads[p.name]
    if sp_grads is not None:
        for p in model.curiosity.state_predictor_parameters():
            p.grad[...] = sp_grads[p.name]
    if ap_grads is not None:
        for p in model.curiosity.action_predictor_parameters():
            p.grad[...] = ap_grads[p.name]
    sgd_step(all_params, opt)
    zero_grads(all_params)
    return stats


@dataclass
class EpochReport:
    epoch: int
    mean_intrinsic_reward: float
    mean_extrinsic_reward: float
    rl_loss: float
    sp_loss: float
    ap_loss: float
    xe_loss: float
    eta: float
    learning_rate: float
    val_bleu1: float
    val_bleu2: float
    val_bleu3: float
    val_bleu4: float
    val_cider: float
    val_distinct1: float
    val_distinct2: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    def validate_finite(self) -> None:
        for key, value in asdict(self).items():
            if isinstance(value, float) and not math.isfinite(value):
                raise TrainingAborted(f"non-finite report field {key!r}")


@dataclass
class MetricReport:
    bleu: dict[int, float]
    cider: float
    distinct1: float
    distinct2: float
    n_scenes: int
    graph: met.DiversityGraph


def evaluate(scenes: Sequence[Scene], model: ModelParams, vocab: Vocabulary,
             idf: met.IdfTable, cfg: TrainConfig) -> MetricReport:
    """Decode every scene and score corpus BLEU-1..4, the consensus metric
    and diversity statistics."""
    samples = []
    decoded = []
    for scene in scenes:
        if cfg.decode == "beam" and cfg.beam_width > 1:
            tokens = pol.beam_search(model.policy, scene.features, cfg.t_max, cfg.beam_width)
        else:
            tokens = pol.rollout_greedy(model.policy, scene.features, cfg.t_max)
        cand = vocab.decode_text(tokens)
        refs = [vocab.decode_text(r) for r in scene.references]
        samples.append((cand, refs))
        decoded.append(cand)
    bleu_scores = {n: met.bleu(samples, max_n=n, mode="corpus") for n in (1, 2, 3, 4)}
    cdr = met.cider(samples, idf)
    graph = met.diversity_graph(decoded)
    return MetricReport(bleu=bleu_scores, cider=cdr, distinct1=graph.distinct_1,
                        distinct2=graph.distinct_2, n_scenes=len(scenes), graph=graph)


def reference_documents(scenes: Sequence[Scene], vocab: Vocabulary) -> list[list[list[str]]]:
    return [[vocab.decode_text(r) for r in scene.references] for scene in scenes]


@dataclass
class TrainResult:
    model: ModelParams
    reports: list[EpochReport]
    best_cider: float


def _epoch_rng(seed: int, epoch: int) -> np.random.Generator:
    return np.random.default_rng([seed, epoch])


def save_model(path, model: ModelParams, extra: dict | None = None) -> None:
    ckpt.save_checkpoint(path, ckpt.params_as_dict(model.parameters()), extra=extra)


def load_model(path, cfg: TrainConfig, vocab_size: int,
               feature_dim: int) -> tuple[ModelParams, dict]:
    model = init_model(cfg, vocab_size, feature_dim)
    tensors, extra = ckpt.load_checkpoint(path)
    ckpt.load_into_params(model.parameters(), tensors)
    return model, extra


def train(train_scenes: Sequence[Scene], val_scenes: Sequence[Scene],
          vocab: Vocabulary, cfg: TrainConfig,
          start_epoch: int = 0, model: ModelParams | None = None,
          report_sink=None) -> TrainResult:
    """Run the full training loop.

    Deterministic given (scenes, config): parameter init, per-epoch shuffles
    and rollout sampling all derive from cfg.seed. Each epoch applies the
    imitation-weight and learning-rate schedules, evaluates the validation
    split with greedy decoding, and writes checkpoints when out_dir is set.
    """
    if not train_scenes:
        raise ConfigError("training split is empty")
    feature_dim = train_scenes[0].feature_dim
    if model is None:
        model = init_model(cfg, vocab.size, feature_dim)
    idf = met.build_idf(reference_documents(train_scenes, vocab))
    opt = OptimState(learning_rate=cfg.learning_rate, clip_norm=cfg.clip_norm,
                     variant=cfg.optimizer)
    out_dir = Path(cfg.out_dir) if cfg.out_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)

    eval_scenes = val_scenes if val_scenes else train_scenes
    reports: list[EpochReport] = []
    best_cider = -math.inf
    for epoch in range(start_epoch, cfg.epochs):
        eta = 1.0 if cfg.mode == "xe" else eta_schedule(
            cfg.imitation_weight, cfg.imitation_decay, epoch)
        opt.learning_rate = lr_schedule(cfg.learning_rate, cfg.lr_decay,
                                        cfg.lr_decay_period, epoch)
        rng = _epoch_rng(cfg.seed, epoch)
        order = rng.permutation(len(train_scenes))
        totals = StepStats()
        n_batches = 0
        for lo in range(0, len(order), cfg.batch_size):
            batch = [train_scenes[i] for i in order[lo:lo + cfg.batch_size]]
            stats = train_step(batch, model, opt, cfg, vocab, idf, rng, eta, epoch)
            totals.rl_loss += stats.rl_loss
            totals.sp_loss += stats.sp_loss
            totals.ap_loss += stats.ap_loss
            totals.xe_loss += stats.xe_loss
            totals.intrinsic_sum += stats.intrinsic_sum
            totals.intrinsic_steps += stats.intrinsic_steps
            totals.extrinsic_sum += stats.extrinsic_sum
            totals.episodes += stats.episodes
            n_batches += 1

        val = evaluate(eval_scenes, model, vocab, idf, cfg)
        report = EpochReport(
            epoch=epoch,
            mean_intrinsic_reward=(totals.intrinsic_sum / totals.intrinsic_steps
                                   if totals.intrinsic_steps else 0.0),
            mean_extrinsic_reward=(totals.extrinsic_sum / totals.episodes
                                   if totals.episodes and cfg.mode != "xe" else 0.0),
            rl_loss=totals.rl_loss / n_batches,
            sp_loss=totals.sp_loss / n_batches,
            ap_loss=totals.ap_loss / n_batches,
            xe_loss=totals.xe_loss / n_batches,
            eta=eta,
            learning_rate=opt.learning_rate,
            val_bleu1=val.bleu[1], val_bleu2=val.bleu[2],
            val_bleu3=val.bleu[3], val_bleu4=val.bleu[4],
            val_cider=val.cider,
            val_distinct1=val.distinct1,
            val_distinct2=val.distinct2,
        )
        report.validate_finite()
        reports.append(report)
        if report_sink is not None:
            report_sink(report)
        improved = val.cider > best_cider
        if improved:
            best_cider = val.cider
        if out_dir:
            extra = {"epoch": epoch, "config": cfg.semantic_dict()}
            save_model(out_dir / "last.ckpt", model, extra=extra)
            if improved:
                save_model(out_dir / "best.ckpt", model, extra=extra)
    return TrainResult(model=model, reports=reports, best_cider=best_cider)
