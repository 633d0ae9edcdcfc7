"""Online encoder adaptation from prediction consistency.

Along with adapting each input, the classifier encoder is nudged so that
its prediction on the raw corrupted cloud agrees with its predictions on
the adapted versions. The head stays frozen, so the class geometry of
the feature space is preserved.

Run: python demos/05_online_model_adaptation.py
"""

from dataclasses import replace

from pcadapt import AdaptConfig, OnlineConfig, PipelineConfig, ScenarioSpec, build_benchmark, run_pipeline

cfg = PipelineConfig(
    seed=21,
    classes=("sphere", "cube", "cone", "torus"),
    n_train_per_class=12,
    n_eval_per_class=8,
    n_points=256,
    train_epochs=30,
    corruptions=(("gaussian", 5), ("impulse", 5)),
    scenario=ScenarioSpec(batch_size=16, n_instances=64),
    adapt=AdaptConfig(steps=30, votes=3),
    mixture_pool=2048,
)

bench = build_benchmark(cfg)
input_only, _ = run_pipeline(cfg, bench)
online, _ = run_pipeline(replace(cfg, online=OnlineConfig(update_steps=1, votes=3)), bench)

print(f"{'corruption':<14} {'unadapted':>9} {'input-only':>11} {'online':>8} {'head frozen':>12}")
for key in input_only.sections:
    sec_in = input_only.sections[key]
    sec_on = online.sections[key]
    print(f"{key:<14} {sec_in['unadapted_accuracy']:>9.3f} {sec_in['accuracy']:>11.3f}"
          f" {sec_on['accuracy']:>8.3f} {str(sec_on['online_head_unchanged']):>12}")
