"""One-off calibration probe for the end-to-end pipeline (not shipped)."""
import sys, time, json
import numpy as np

from fabfold.sim import ClothParams, WorkspaceConfig, init_flat, crumple
from fabfold.oracle import OracleConfig, generate_demos, goal_mask_from_oracle
from fabfold.episodes import save_episode, load_episode
from fabfold.dataset import build_samples, augment_dataset, add_negatives, AugmentConfig
from fabfold.heatmap import HeatmapConfig
from fabfold.training import TrainConfig, train_policy
from fabfold.policy import PolicyKind, select_action
from fabfold.metrics import GoalSpec
from fabfold.rollout import run_episode, ExperimentConfig, run_experiment
from fabfold.net import save_checkpoint

t0 = time.time()
params, ws = ClothParams(), WorkspaceConfig()
hm = HeatmapConfig()

print("=== demos ===", flush=True)
goal_mask, flat_cov = goal_mask_from_oracle(params, ws)
goal = GoalSpec(goal_mask=goal_mask, flat_coverage=flat_cov)
cfg = OracleConfig(seed=0)
demos = generate_demos(15, 1, cfg, params, ws,
                       progress=lambda i, ep, info: print(f"  ep{i}: {len(ep.steps)} steps {info['complete']}", flush=True))
episodes = [ep for ep, info in demos]
print(f"demos done {time.time()-t0:.0f}s", flush=True)

train_eps, val_eps = episodes[:10], episodes[10:]
train, val = [], []
for ep in train_eps:
    s, _ = build_samples(ep, hm)
    train += s
for ep in val_eps:
    s, _ = build_samples(ep, hm)
    val += s
print(f"raw positives: train {len(train)} val {len(val)}", flush=True)
train = augment_dataset(train, AugmentConfig(n_copies=20, seed=0), hm)
train, _ = add_negatives(train, seed=0)
print(f"train set: {len(train)} ({sum(s.negative for s in train)} neg)  {time.time()-t0:.0f}s", flush=True)

print("=== train pick-to-place ===", flush=True)
tcfg = TrainConfig(max_steps=3000, val_every=250, seed=0)
model, rows, info = train_policy(train, val, PolicyKind.PICK_TO_PLACE, tcfg, hm,
                                 progress=lambda s, r: print(f"  step {s}: loss={r.train_loss:.4f} valMSE={r.val_action_mse:.1f}", flush=True))
print(f"best step {info['best_step']} mse {info['best_val_mse']:.1f}  {time.time()-t0:.0f}s", flush=True)
save_checkpoint(model.params, 1, "/tmp/cal_p2p.fnet",
                meta={"kind": "pick-to-place", "sigma_px": 2.0, "image_px": 64,
                      "trained_steps": 3000, "val_mse": info["best_val_mse"]})

print("=== probe rollouts (stride 1) ===", flush=True)
policy = lambda obs: select_action(model, obs, stride=1)
ecfg = ExperimentConfig(crumple_k=1, runs_per_config=5, config_seeds=(11, 23, 37))
summary = run_experiment(policy, goal, params, ws, ecfg, method="pick-to-place",
                         progress=lambda c, r, rep: print(
                             f"  cfg{c} run{r}: success={rep.success} iou={rep.best_iou:.3f} isc={rep.best_isc:.3f} steps={rep.steps_taken}", flush=True))
for row in summary.rows:
    print(row, flush=True)
print(f"MEAN success {summary.mean_success:.2f}, iou {summary.mean_iou:.3f}, isc {summary.mean_isc:.3f}", flush=True)
print(f"total {time.time()-t0:.0f}s", flush=True)
