use std::fmt::Write as _;

use extprob::coarsegrain::{
    class_sums, coarse_extended_probabilities_direct, greedy_decohering_search, CoarseGrained, Partition,
};
use extprob::composite::{product_rule_table, recorded_product};
use extprob::exemplars::{dutchbook, threebox, twoslit};
use extprob::finegrained::{class_sum, cylinder_history_set, cylinder_partition, fundamental_distribution_default};
use extprob::histories::{dec_measure, decoherence_functional, extended_probabilities, DecoherenceOptions};
use extprob::model::{format_real, load_model, parse_partition_literal, Model};
use extprob::records::{construct_records, record_correlation_report, verify_strong_records, verify_weak_records};
use extprob::{random, Error, EvolutionSpec, HistoryFamily, HistorySet, Result, StateVector};
use serde::Serialize;
use serde_json::{json, Value};

use crate::{Cli, Command, ModelArgs};

/// Tolerance for the fine-grained consistency check.
const CYLINDER_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

fn artifact(name: &str, contents: String) -> Artifact {
    Artifact {
        name: name.to_string(),
        contents,
    }
}

fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

/// CSV field in double quotes; labels contain commas.
fn quoted(field: &str) -> String {
    format!("\"{}\"", field.replace('"', "\"\""))
}

pub fn error_json(e: &Error) -> String {
    let mut body = json!({
        "code": e.code(),
        "exit_code": e.exit_code(),
        "message": e.to_string(),
    });
    match e {
        Error::Parse(d) => {
            body["line"] = json!(d.line);
            body["column"] = json!(d.column);
            body["expected"] = json!(d.expected);
        }
        Error::InvariantViolation { invariant, magnitude } => {
            body["invariant"] = json!(invariant);
            body["magnitude"] = json!(magnitude);
        }
        Error::NotDecoherent { offending, max } => {
            body["offending"] = json!(offending);
            body["max_off_diagonal"] = json!(max);
        }
        Error::CapExceeded { what, count, cap } => {
            body["what"] = json!(what);
            body["count"] = json!(count);
            body["cap"] = json!(cap);
        }
        _ => {}
    }
    serde_json::to_string(&json!({ "error": body })).expect("error serializes")
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Eval(_) => "eval",
            Command::Decohere { .. } => "decohere",
            Command::Records { .. } => "records",
            Command::Coarsen { .. } => "coarsen",
            Command::Composite { .. } => "composite",
            Command::Finegrained { .. } => "finegrained",
            Command::Twoslit { .. } => "twoslit",
            Command::Threebox => "threebox",
            Command::Dutchbook { .. } => "dutchbook",
            Command::Run { .. } => "run",
        }
    }

    pub fn model_path(&self) -> Option<String> {
        let p = match self {
            Command::Eval(m)
            | Command::Decohere { model: m, .. }
            | Command::Records { model: m, .. }
            | Command::Coarsen { model: m, .. } => m.model.as_ref(),
            Command::Composite { model } | Command::Finegrained { model } => Some(model),
            _ => None,
        };
        p.map(|p| p.display().to_string())
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Command::Eval(m)
            | Command::Decohere { model: m, .. }
            | Command::Records { model: m, .. }
            | Command::Coarsen { model: m, .. } => m.seed,
            _ => None,
        }
    }
}

fn load(args: &ModelArgs) -> Result<Model> {
    if let Some(path) = &args.model {
        return Ok(load_model(path)?.1);
    }
    let Some(seed) = args.seed else {
        return Err(Error::InvalidConfig("either --model or --seed is required".into()));
    };
    if args.dim == 0 || args.slots == 0 {
        return Err(Error::InvalidConfig("--dim and --slots must be positive".into()));
    }
    let mut rng = random::rng(seed);
    let psi = random::random_state(&mut rng, args.dim);
    let hs = random::random_history_set(&mut rng, args.dim, args.slots)?;
    Ok(Model {
        dim: args.dim,
        psi: Some(psi),
        evolution: EvolutionSpec::zero(args.dim),
        histories: Some(hs),
        partitions: Vec::new(),
        fine: None,
        composite: None,
    })
}

fn state_and_histories(model: &Model) -> Result<(&StateVector, &HistorySet)> {
    Ok((model.require_state()?, model.require_histories()?))
}

fn resolve_partition(model: &Model, hs: &HistorySet, spec: &str) -> Result<Partition> {
    if spec.trim_start().starts_with('[') {
        Partition::new(hs.len(), parse_partition_literal(spec)?)
    } else {
        Ok(model.partition(spec)?.flat.clone())
    }
}

pub fn run(cli: &Cli) -> Result<Vec<Artifact>> {
    let opts = DecoherenceOptions::with_tolerance(cli.tol);
    match &cli.command {
        Command::Eval(args) => {
            let model = load(args)?;
            let (psi, hs) = state_and_histories(&model)?;
            let report = decoherence_functional(hs, psi, &opts)?;
            let mut csv = String::from("history,ep,dh\n");
            for ((label, ep), dh) in report.labels.iter().zip(&report.ep_probs).zip(&report.dh_probs) {
                let _ = writeln!(csv, "{},{},{}", quoted(label), format_real(*ep), format_real(*dh));
            }
            Ok(vec![artifact("eval.csv", csv)])
        }
        Command::Decohere { model, partition } => {
            let model = load(model)?;
            let (psi, hs) = state_and_histories(&model)?;
            let report = match partition {
                Some(spec) => {
                    let cg = CoarseGrained::new(hs, resolve_partition(&model, hs, spec)?)?;
                    decoherence_functional(&cg, psi, &opts)?
                }
                None => decoherence_functional(hs, psi, &opts)?,
            };
            Ok(vec![artifact("decohere.json", to_json(&report))])
        }
        Command::Records { model, partition } => {
            let model = load(model)?;
            let (psi, hs) = state_and_histories(&model)?;
            let out = match partition {
                Some(spec) => {
                    let cg = CoarseGrained::new(hs, resolve_partition(&model, hs, spec)?)?;
                    records_report(&cg, psi, &opts)?
                }
                None => records_report(hs, psi, &opts)?,
            };
            Ok(vec![artifact("records.json", to_json(&out))])
        }
        Command::Coarsen { model, partition } => {
            let model = load(model)?;
            let (psi, hs) = state_and_histories(&model)?;
            let out = match partition {
                Some(spec) => apply_partition(hs, psi, resolve_partition(&model, hs, spec)?, &opts)?,
                None => {
                    let outcome = greedy_decohering_search(hs, psi, cli.tol)?;
                    let labels: Vec<String> = outcome
                        .partition
                        .classes()
                        .iter()
                        .map(|c| c.iter().map(|&i| hs.history_label(i)).collect::<Vec<_>>().join("|"))
                        .collect();
                    json!({ "mode": "greedy", "target": cli.tol, "class_labels": labels, "outcome": outcome })
                }
            };
            Ok(vec![artifact("coarsen.json", to_json(&out))])
        }
        Command::Composite { model } => {
            let model = load_model(model)?.1;
            let cs = model
                .composite
                .as_ref()
                .ok_or_else(|| Error::InvalidConfig("model has no factor declarations".into()))?;
            let rows = product_rule_table(cs)?;
            let max_violation = rows.iter().map(|r| r.violation).fold(0.0, f64::max);
            let recorded = match recorded_product(cs, &opts) {
                Ok(rs) => json!({ "recorded": true, "records": rs.len(), "t_rec": rs.t_rec() }),
                Err(e @ (Error::FactorNotRecorded { .. } | Error::NotDecoherent { .. })) => {
                    json!({ "recorded": false, "reason": e.code(), "message": e.to_string() })
                }
                Err(e) => return Err(e),
            };
            let out = json!({
                "factor_shapes": cs.factors().iter().map(|f| f.histories.shape()).collect::<Vec<_>>(),
                "max_violation": max_violation,
                "records": recorded,
                "rows": rows,
            });
            Ok(vec![artifact("composite.json", to_json(&out))])
        }
        Command::Finegrained { model } => {
            let model = load_model(model)?.1;
            let spec = model
                .fine
                .as_ref()
                .ok_or_else(|| Error::InvalidConfig("model has no fine section".into()))?;
            let dist = fundamental_distribution_default(spec)?;
            let d = spec.dim();
            let n = spec.steps();
            let mut checks = Vec::with_capacity(n + 1);
            let mut groupings_list: Vec<(String, Vec<Partition>)> =
                vec![("all".into(), vec![Partition::singletons(d); n])];
            for k in 0..n {
                let mut g = vec![Partition::total(d); n];
                g[k] = Partition::singletons(d);
                groupings_list.push((format!("step{k}"), g));
            }
            let mut max_defect: f64 = 0.0;
            for (name, groupings) in groupings_list {
                let sums = class_sum(&dist, &cylinder_partition(spec, &groupings)?)?;
                let chain = extended_probabilities(&cylinder_history_set(spec, &groupings)?, spec.psi())?;
                let defect = sums.iter().zip(&chain).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                max_defect = max_defect.max(defect);
                checks.push(json!({ "cylinders": name, "max_defect": defect }));
            }
            let out = json!({
                "dim": d,
                "steps": n,
                "total": dist.total(),
                "negative_weights": dist.values.iter().filter(|&&w| w < 0.0).count(),
                "checks": checks,
                "max_defect": max_defect,
                "pass": max_defect <= CYLINDER_TOL,
            });
            Ok(vec![
                artifact("finegrained.csv", dist.to_csv()),
                artifact("finegrained.json", to_json(&out)),
            ])
        }
        Command::Twoslit {
            k_delta,
            bins,
            sweep,
            samples,
            panels,
        } => {
            let mut cfg = twoslit::TwoSlitConfig::default();
            if let Some(kd) = k_delta {
                cfg.bin_width = kd / cfg.k;
            }
            if let Some(n) = bins {
                if *n == 0 {
                    return Err(Error::InvalidConfig("--bins must be positive".into()));
                }
                cfg.bin_width = (cfg.y_max - cfg.y_min) / *n as f64;
            }
            cfg.panels = *panels;
            cfg.validate()?;
            let rows = twoslit::binned_extended_probabilities(&cfg)?;
            Ok(vec![
                artifact("twoslit_bins.csv", twoslit::bins_csv(&rows)),
                artifact("twoslit_density.csv", twoslit::density_curve_csv(&cfg, *samples)?),
                artifact("twoslit_sweep.csv", twoslit::sweep_csv(&twoslit::delta_sweep(&cfg, sweep)?)),
            ])
        }
        Command::Threebox => Ok(vec![artifact(
            "threebox.json",
            to_json(&threebox::three_box_table(cli.tol)?),
        )]),
        Command::Dutchbook {
            p_a,
            p_not_a,
            stake_a,
            stake_not_a,
        } => {
            let bets: Vec<dutchbook::BetSpec> = match p_a {
                Some(p) => vec![dutchbook::BetSpec {
                    p_a: *p,
                    p_not_a: *p_not_a,
                    stake_a: *stake_a,
                    stake_not_a: *stake_not_a,
                }],
                None => [-0.25, 0.0, 0.3, 1.0, 1.25]
                    .iter()
                    .flat_map(|&p| {
                        [*stake_a, -*stake_a].map(|s| dutchbook::BetSpec {
                            p_a: p,
                            p_not_a: *p_not_a,
                            stake_a: s,
                            stake_not_a: *stake_not_a,
                        })
                    })
                    .collect(),
            };
            let mut csv = String::from("p_a,p_not_a,stake_a,stake_not_a,gain_a,gain_not_a,sure_loss\n");
            for bet in &bets {
                let g = dutchbook::dutch_book_gains(bet);
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},{},{}",
                    format_real(bet.p_a),
                    format_real(bet.p_not_a()),
                    format_real(bet.stake_a),
                    format_real(bet.stake_not_a),
                    format_real(g.if_a),
                    format_real(g.if_not_a),
                    g.sure_loss()
                );
            }
            Ok(vec![artifact("dutchbook.csv", csv)])
        }
        Command::Run { .. } => Err(Error::InvalidConfig("nested run".into())),
    }
}

fn records_report<F: HistoryFamily + ?Sized>(family: &F, psi: &StateVector, opts: &DecoherenceOptions) -> Result<Value> {
    let rs = construct_records(family, psi, opts)?;
    let strong = verify_strong_records(family, psi, &rs, opts.tolerance)?;
    let weak = verify_weak_records(family, psi, &rs, opts.tolerance)?;
    let correlation = record_correlation_report(family, psi, &rs)?;
    let probs = rs.record_probabilities(psi)?;
    let records: Vec<Value> = rs
        .members()
        .iter()
        .zip(&probs)
        .enumerate()
        .map(|(i, (r, p))| json!({ "history": family.history_label(i), "rank": r.rank(), "probability": p }))
        .collect();
    Ok(json!({
        "t_rec": rs.t_rec(),
        "completion_index": rs.completion_index(),
        "records": records,
        "strong": strong,
        "weak": weak,
        "correlation": correlation,
    }))
}

fn apply_partition(hs: &HistorySet, psi: &StateVector, part: Partition, opts: &DecoherenceOptions) -> Result<Value> {
    let fine = decoherence_functional(hs, psi, opts)?;
    let summed = class_sums(&fine.ep_probs, &part)?;
    let direct = coarse_extended_probabilities_direct(hs, &part, psi)?;
    let linearity_defect = summed.iter().zip(&direct).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let cg = CoarseGrained::new(hs, part.clone())?;
    let coarse = decoherence_functional(&cg, psi, opts)?;
    Ok(json!({
        "mode": "partition",
        "partition": part,
        "fine_extended": fine.ep_probs,
        "coarse_extended": summed,
        "coarse_extended_direct": direct,
        "linearity_defect": linearity_defect,
        "fine_dec": dec_measure(&fine.functional),
        "coarse_dec": coarse.dec,
        "coarse": coarse,
    }))
}
