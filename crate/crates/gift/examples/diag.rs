// Diagnostic: train on the criterion-6 setup and inspect predictions.
use gift::annotation::Split;
use gift::eval::{baseline_mean_predictor, evaluate, evaluate_model, MatchConfig};
use gift::features::ROLE_CHANNEL;
use gift::model::{forecast_occurrence, ModelConfig};
use gift::nn::ResidualMode;
use gift::synth::{assign_splits, generate_clip, SynthConfig};
use gift::train::{train, TrainConfig};

fn main() {
    let epochs: u32 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(30);
    let embed: usize = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(32);
    let residual = match std::env::args().nth(3).as_deref() {
        Some("skip") => ResidualMode::InputSkip,
        _ => ResidualMode::SelfProjection,
    };
    let dropout: f64 = std::env::args().nth(4).and_then(|s| s.parse().ok()).unwrap_or(0.1);
    let lr: f64 = std::env::args().nth(5).and_then(|s| s.parse().ok()).unwrap_or(1e-3);
    let lambda_fore: f64 = std::env::args().nth(6).and_then(|s| s.parse().ok()).unwrap_or(0.01);
    let consistency: bool = std::env::args().nth(7).as_deref() != Some("noconst");
    let synth_cfg = SynthConfig { seed: 0x20260811, n_clips: 200, ..SynthConfig::default() };
    let splits = assign_splits(&synth_cfg);
    let (mut tr, mut va, mut te) = (vec![], vec![], vec![]);
    for i in 0..synth_cfg.n_clips {
        let c = generate_clip(&synth_cfg, i).unwrap();
        match splits[i as usize] { Split::Train => tr.push(c), Split::Val => va.push(c), Split::Test => te.push(c) }
    }
    let mcfg = ModelConfig { embed_dim: embed, residual, dropout, ..ModelConfig::default() };
    let tcfg = TrainConfig { seed: 0x20260811, epochs, dropout, learning_rate: lr, lambda_fore, consistency, ..TrainConfig::default() };
    let t0 = std::time::Instant::now();
    let (model, hist) = train(&tr, &va, &mcfg, &tcfg).unwrap();
    println!("trained {} epochs ({:?}, dropout {}, lr {}, l_fore {}, const {}) in {:?}, best epoch {}", epochs, residual, dropout, lr, lambda_fore, consistency, t0.elapsed(), hist.best_epoch);
    for r in hist.epochs.iter().step_by(5.max(epochs as usize / 10)) {
        println!("ep {:3} train total {:.5} recon {:.5} fore {:.5} const {:.6} | val total {:.5} fore_role {:.5}",
            r.epoch, r.train.total, r.train.recon, r.train.fore, r.train.consistency,
            r.val.total, r.val.fore_terms[5]);
    }
    let report = evaluate_model(&model, &te, 10, 0.5, &MatchConfig::default()).unwrap();
    let base = baseline_mean_predictor(&tr).unwrap();
    let base_report = evaluate(&base, &te, &MatchConfig::default()).unwrap();
    println!("model MAE {:.3} coverage {:.3} | baseline frame {} MAE {:.3}",
        report.mae, report.coverage, base.frame, base_report.mae);
    for clip in te.iter().take(3) {
        let pred = model.forward_full(clip, 10).unwrap();
        let mut track = String::new();
        for k in 10..50 {
            let s = (0..5).map(|p| pred.at(&[k, p, ROLE_CHANNEL])).fold(f64::NEG_INFINITY, f64::max);
            track.push_str(&format!("{:+.2} ", s));
        }
        let fc = forecast_occurrence(&model, clip, 10, 0.5).unwrap();
        println!("clip {} gt {} -> pred {} crossed {}\n  {}", clip.clip_id, clip.occurrence_frame, fc.point_estimate, fc.crossed_threshold, track);
    }
}
