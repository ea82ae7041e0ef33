//! Command implementations. Each returns a report; domain failures that
//! still produce a report (unreachable depth, infeasible SLA, failed
//! verification) are carried alongside it.

use std::collections::BTreeSet;

use kbcost_core::allocation::cluster::{cluster_aware_allocate, cluster_queries, ClusterConfig};
use kbcost_core::allocation::{
    brute_force_opt, dr_check, greedy_knapsack, Allocation, CandidateSet, DepthObjective, DrReport,
};
use kbcost_core::closure::{ClosureResult, Reasoner};
use kbcost_core::depth::{depth_profile, derivation_depth, Justification};
use kbcost_core::noise::{
    apply_noise, base_conversion_bits, noisy_tradeoff, perturbation_report, two_phase_allocate,
    InfeasibleReason, NoiseSpec, RobustObjective, SlaConfig, TwoPhaseOutcome,
};
use kbcost_core::trace::codec::length_bound;
use kbcost_core::trace::search::{ess_plus_in, min_trace_length_in};
use kbcost_core::trace::{
    census::enumerate_census, decode_trace, encode_trace, encoded_len, replay, richness_census,
    tightness_suite, EssMode, SearchConfig,
};
use kbcost_core::tradeoff::{
    amortized_costs, critical_frequency, critical_frequency_bisect, description_proxy_in,
    fc_window, locality_report, CostModel, DescriptionProxy, Workload,
};
use kbcost_core::{
    canonical_encode, parse_kb, Depth, Error as CoreError, Formula, KnowledgeBase, PremiseBase,
    ProofSystem, Vocabulary,
};
use serde_json::{json, Map, Value};

use crate::cli::{
    AllocateArgs, ClusterArgs, Command, CostArgs, DepthArgs, FcArgs, NoiseArgs, NoiseSource,
    NsearchArgs, QueryArgs, RichnessArgs, TightnessArgs, TradeoffArgs, TwoPhaseArgs, VerifyArgs,
};
use crate::error::{CliError, Result};
use crate::io::{self, NoiseInput, WorkloadHeader};
use crate::report::{num, Report, Table};
use crate::verify::{self, SuiteConfig};

/// A report plus an optional domain failure (exit code 1).
#[derive(Debug)]
pub struct Outcome {
    pub report: Report,
    pub failure: Option<String>,
}

impl From<Report> for Outcome {
    fn from(report: Report) -> Self {
        Outcome {
            report,
            failure: None,
        }
    }
}

pub fn run(cmd: &Command) -> Result<Outcome> {
    match cmd {
        Command::Core(a) => core(a),
        Command::Depth(a) => depth(a),
        Command::Trace(a) => trace(a),
        Command::Encode(a) => encode(a),
        Command::Nsearch(a) => nsearch(a),
        Command::Tradeoff(a) => tradeoff(a),
        Command::Fc(a) => fc(a),
        Command::Allocate(a) => allocate(a),
        Command::Cluster(a) => cluster(a),
        Command::Noise(a) => noise(a),
        Command::Twophase(a) => twophase(a),
        Command::Richness(a) => richness(a),
        Command::Tightness(a) => tightness(a),
        Command::Verify(a) => verify_cmd(a),
    }
}

// Shared helpers.

fn load_kb(path: &str, report: &mut Report) -> Result<KnowledgeBase> {
    let input = io::read_input(path)?;
    report.input("kb", &input.digest);
    io::parse_kb_input(&input)
}

fn load_workload(path: &str, report: &mut Report) -> Result<(Workload, WorkloadHeader)> {
    let input = io::read_input(path)?;
    report.input("workload", &input.digest);
    io::parse_workload(&input.text, path)
}

fn load_candidates(path: &str, report: &mut Report) -> Result<Vec<(Formula, Option<u64>)>> {
    let input = io::read_input(path)?;
    report.input("candidates", &input.digest);
    io::parse_candidates(&input.text, path)
}

fn query(text: &str, report: &mut Report) -> Result<Formula> {
    report.param("query", text.trim());
    io::formula(text, "--query")
}

fn cost_model(
    args: &CostArgs,
    header: Option<&WorkloadHeader>,
    report: &mut Report,
) -> Result<CostModel> {
    let rho = args.rho.or(header.and_then(|h| h.rho)).unwrap_or(1.0);
    let c_hit = args.c_hit.or(header.and_then(|h| h.c_hit)).unwrap_or(1.0);
    report.param("rho", num(rho)).param("c_hit", num(c_hit));
    Ok(CostModel::new(rho, c_hit)?)
}

fn search_config(node_budget: u64, report: &mut Report) -> SearchConfig {
    report.param("node_budget", node_budget);
    SearchConfig {
        node_budget,
        ..SearchConfig::default()
    }
}

fn noise_spec(
    src: &NoiseSource,
    base: &PremiseBase,
    system: &ProofSystem,
    seed: u64,
    report: &mut Report,
) -> Result<NoiseSpec> {
    let input = match &src.noise {
        Some(path) => {
            let input = io::read_input(path)?;
            report.input("noise", &input.digest);
            io::parse_noise(&input.text, path)?
        }
        None => NoiseInput::Generated {
            loss_rate: src.loss_rate.unwrap_or(0.0),
            pollution_rate: src.pollution_rate.unwrap_or(0.0),
            seed,
        },
    };
    let spec = match input {
        NoiseInput::Explicit(spec) => spec,
        NoiseInput::Generated {
            loss_rate,
            pollution_rate,
            seed,
        } => {
            report
                .param("loss_rate", num(loss_rate))
                .param("pollution_rate", num(pollution_rate))
                .param("noise_seed", seed);
            NoiseSpec::generate(base, system, loss_rate, pollution_rate, seed)?
        }
    };
    spec.validate(base)?;
    Ok(spec)
}

fn has_noise_source(src: &NoiseSource) -> bool {
    src.noise.is_some() || src.loss_rate.is_some() || src.pollution_rate.is_some()
}

fn formulas<'a>(it: impl IntoIterator<Item = &'a Formula>) -> Value {
    it.into_iter()
        .map(|f| Value::String(f.to_string()))
        .collect()
}

fn depth_value(d: Depth) -> Value {
    match d {
        Depth::Finite(x) => x.into(),
        Depth::Unreachable => "unreachable".into(),
    }
}

fn proxy_json(p: &DescriptionProxy) -> Value {
    json!({
        "proxy_bits": p.bits,
        "proxy_source": p.source.as_str(),
        "proxy_trace_bits": p.trace_bits,
        "proxy_raw_bits": p.raw_bits,
        "trace_len": p.trace_len,
        "trace_exact": p.trace_exact,
    })
}

/// Depth and description length restated in nats.
fn entropy_json(depth: u32, proxy: &DescriptionProxy) -> Value {
    let ln2 = std::f64::consts::LN_2;
    json!({
        "h_derive_nats": num(f64::from(depth) * ln2),
        "proxy_h_k_nats": num(proxy.bits as f64 * ln2),
    })
}

fn dr_json(r: &DrReport) -> Value {
    json!({
        "samples": r.samples,
        "violations": r.violations,
        "violation_rate": num(r.rate),
        "component_violations": r.component_violations,
        "counterexample": r.counterexample.as_ref().map(|v| json!({
            "a": v.a, "b": v.b, "u": v.u, "component": v.component,
            "marginal_a": num(v.marginal_a), "marginal_b": num(v.marginal_b),
        })),
    })
}

fn allocation_json(a: &Allocation, cands: &CandidateSet, budget: u64) -> Value {
    json!({
        "selected": a.selected.iter().map(|&i| json!({
            "formula": cands.item(i).to_string(), "cost": cands.costs()[i],
        })).collect::<Vec<_>>(),
        "total_cost": a.total_cost,
        "budget": budget,
        "budget_use": if budget > 0 { num(a.total_cost as f64 / budget as f64) } else { Value::Null },
        "delta": num(a.objective_value),
    })
}

/// Non-premise derivable workload queries plus the derived atoms of their
/// depth witnesses.
pub fn default_candidates(
    base: &PremiseBase,
    system: &ProofSystem,
    queries: &[(Formula, f64)],
) -> Vec<(Formula, Option<u64>)> {
    let c = Reasoner::new(system, base).closure(base);
    let mut out = BTreeSet::new();
    for (q, _) in queries {
        if !c.entails(q) {
            continue;
        }
        if !base.contains(q) {
            out.insert(q.clone());
        }
        for (f, j) in c.depth_result(q).witness {
            if matches!(j, Justification::Rule(_)) && !base.contains(&f) {
                out.insert(f);
            }
        }
    }
    out.into_iter().map(|f| (f, None)).collect()
}

// Commands.

fn core(args: &crate::cli::KbArgs) -> Result<Outcome> {
    let mut r = Report::new("core");
    let kb = load_kb(&args.kb, &mut r)?;
    let s_o = kb.operational_base();
    let (core, shortcuts) = Reasoner::for_kb(&kb).atom_core(&s_o);
    r.result = json!({
        "stored_size": s_o.len(),
        "core_size": core.len(),
        "core": formulas(core.iter()),
        "shortcuts": formulas(shortcuts.iter()),
    });
    Ok(r.into())
}

fn depth(args: &DepthArgs) -> Result<Outcome> {
    let mut r = Report::new("depth");
    let kb = load_kb(&args.kb.kb, &mut r)?;
    let q = query(&args.query, &mut r)?;
    let base = kb.operational_base();
    let res = derivation_depth(&q, &base, &kb.system);
    let witness: Vec<Value> = res
        .witness
        .iter()
        .map(|(f, j)| match j {
            Justification::Premise => json!({"formula": f.to_string(), "via": "premise"}),
            Justification::Rule(inst) => json!({
                "formula": f.to_string(), "via": "rule", "rule_id": inst.rule_id,
                "premises": inst.body.iter().map(|a| a.to_string()).collect::<Vec<_>>(),
            }),
            Justification::Conj { left, right } => json!({
                "formula": f.to_string(), "via": "conjunction",
                "premises": [left.to_string(), right.to_string()],
            }),
        })
        .collect();
    let mut result = Map::new();
    result.insert("depth".into(), depth_value(res.depth));
    result.insert("witness".into(), Value::Array(witness));
    if res.depth.is_finite() {
        let cache = match &args.candidates {
            Some(p) => load_candidates(p, &mut r)?
                .into_iter()
                .map(|(f, _)| f)
                .collect(),
            None => Vec::new(),
        };
        let p = depth_profile(&kb, &q, &cache)?;
        result.insert(
            "profile".into(),
            json!({"core_depth": p.n_int, "stored_depth": p.n_op, "cached_depth": p.n_cached,
                   "cache_size": cache.len()}),
        );
    }
    r.result = Value::Object(result);
    let failure = (!res.depth.is_finite()).then(|| "query is not derivable".to_string());
    Ok(Outcome { report: r, failure })
}

fn closure_for(kb: &KnowledgeBase) -> (PremiseBase, ClosureResult) {
    let base = kb.operational_base();
    let c = Reasoner::for_kb(kb).closure(&base);
    (base, c)
}

fn trace(args: &QueryArgs) -> Result<Outcome> {
    let mut r = Report::new("trace");
    let kb = load_kb(&args.kb.kb, &mut r)?;
    let q = query(&args.query, &mut r)?;
    let cfg = search_config(args.search.node_budget, &mut r);
    let (base, c) = closure_for(&kb);
    let res = min_trace_length_in(&c, &q, &cfg)?;
    let pool = replay(&res.witness, &base, &kb.system)?;
    let m = base.len();
    let steps: Vec<Value> = res
        .witness
        .steps
        .iter()
        .enumerate()
        .map(|(i, s)| {
            json!({"rule_id": s.rule_id, "premises": s.premises,
                   "derives": pool[m + i].to_string()})
        })
        .collect();
    r.result = json!({
        "n": res.n,
        "exact": res.exact,
        "depth": res.depth,
        "m": m,
        "steps": steps,
        "output_pointer": res.witness.output,
        "output": pool[res.witness.output].to_string(),
        "replay_matches_query": pool[res.witness.output] == q,
        "atoms_used": formulas(res.atoms_used.iter()),
        "nodes_expanded": res.nodes_expanded,
    });
    Ok(r.into())
}

fn encode(args: &QueryArgs) -> Result<Outcome> {
    let mut r = Report::new("encode");
    let kb = load_kb(&args.kb.kb, &mut r)?;
    let q = query(&args.query, &mut r)?;
    let cfg = search_config(args.search.node_budget, &mut r);
    let vocab = kb.vocabulary();
    let bits = canonical_encode(&q, &vocab)?;
    let (base, c) = closure_for(&kb);
    let res = min_trace_length_in(&c, &q, &cfg)?;
    let enc = encode_trace(&res.witness, &kb.system)?;
    let arities = res.witness.steps.iter().map(|s| s.premises.len());
    let closed = encoded_len(base.len(), kb.system.rule_count(), arities);
    let bound = length_bound(base.len(), res.n, kb.system.k(), kb.system.rule_count());
    let roundtrip = decode_trace(&enc.bits, &kb.system).as_ref() == Ok(&res.witness);
    r.result = json!({
        "formula_bits": bits.len(),
        "formula_hex": hex::encode(bits.as_bytes()),
        "trace_bits": enc.bits.len(),
        "trace_hex": hex::encode(enc.to_bytes()),
        "declared_m": enc.declared_m,
        "declared_n": enc.declared_n,
        "closed_form_bits": closed,
        "length_bound": bound,
        "roundtrip": roundtrip,
        "trace_exact": res.exact,
    });
    Ok(r.into())
}

fn nsearch(args: &NsearchArgs) -> Result<Outcome> {
    let mut r = Report::new("nsearch");
    let kb = load_kb(&args.query.kb.kb, &mut r)?;
    let q = query(&args.query.query, &mut r)?;
    let cfg = search_config(args.query.search.node_budget, &mut r);
    let mode = match args.samples {
        Some(k) => {
            r.param("ess_mode", "sampled").param("samples", k);
            EssMode::Sampled(k)
        }
        None => {
            r.param("ess_mode", "exact");
            EssMode::Exact
        }
    };
    let (_, c) = closure_for(&kb);
    let res = min_trace_length_in(&c, &q, &cfg)?;
    let ess = ess_plus_in(&c, &q, mode, &cfg)?;
    r.result = json!({
        "n": res.n,
        "exact": res.exact,
        "depth": res.depth,
        "nodes_expanded": res.nodes_expanded,
        "ess_plus": formulas(ess.atoms.iter()),
        "ess_exact": ess.exact,
        "traces_enumerated": ess.traces_enumerated,
        "m_eff": ess.m_eff,
        "lambda": num(ess.lambda),
    });
    Ok(r.into())
}

const DEFAULT_FREQUENCIES: usize = 17;

fn cost_row(
    q: &Formula,
    f: f64,
    proxy: &DescriptionProxy,
    d: u32,
    model: &CostModel,
) -> Result<Vec<Value>> {
    let costs = amortized_costs(proxy.bits as f64, d as f64, f, model)?;
    Ok(vec![
        q.to_string().into(),
        num(f),
        d.into(),
        proxy.bits.into(),
        num(costs.cost_cache),
        num(costs.cost_derive),
        costs.winner.as_str().into(),
    ])
}

const TRADEOFF_HEADER: [&str; 7] = [
    "query",
    "frequency",
    "depth",
    "proxy_bits",
    "cost_cache",
    "cost_derive",
    "winner",
];

/// Frequency sweep of one query.
pub fn tradeoff_sweep(
    kb: &KnowledgeBase,
    kb_digest: &str,
    q: &Formula,
    frequencies: &[f64],
    model: &CostModel,
    cfg: &SearchConfig,
) -> Result<Report> {
    let mut r = Report::new("tradeoff");
    r.input("kb", kb_digest).param("query", q.to_string());
    r.param("rho", num(model.rho))
        .param("c_hit", num(model.c_hit));
    r.param("node_budget", cfg.node_budget);
    r.param(
        "frequencies",
        frequencies.iter().map(|&f| num(f)).collect::<Vec<_>>(),
    );
    let (base, c) = closure_for(kb);
    let d = c.depth(q).finite().ok_or(CoreError::UnreachableQuery)?;
    let proxy = description_proxy_in(&c, &kb.system, q, cfg)?;
    let mut rows = Vec::new();
    for &f in frequencies {
        rows.push(cost_row(q, f, &proxy, d, model)?);
    }
    let cf = critical_frequency(proxy.bits as f64, d as f64, base.len(), model);
    r.result = json!({
        "depth": d,
        "proxy": proxy_json(&proxy),
        "entropy": entropy_json(d, &proxy),
        "f_star": cf.f_star.map(num),
        "rows": table_json(&TRADEOFF_HEADER, &rows),
    });
    r.uses_proxy = true;
    r.table = Some(Table {
        header: TRADEOFF_HEADER.iter().map(|s| s.to_string()).collect(),
        rows,
    });
    Ok(r)
}

fn table_json(header: &[&str], rows: &[Vec<Value>]) -> Value {
    rows.iter()
        .map(|row| {
            Value::Object(
                header
                    .iter()
                    .zip(row)
                    .map(|(h, v)| (h.to_string(), v.clone()))
                    .collect(),
            )
        })
        .collect()
}

fn tradeoff(args: &TradeoffArgs) -> Result<Outcome> {
    let input = io::read_input(&args.kb.kb)?;
    let kb = io::parse_kb_input(&input)?;
    let mut scratch = Report::new("tradeoff");
    let cfg = SearchConfig {
        node_budget: args.search.node_budget,
        ..SearchConfig::default()
    };
    if let Some(text) = &args.query {
        let q = io::formula(text, "--query")?;
        let model = cost_model(&args.cost, None, &mut scratch)?;
        let freqs: Vec<f64> = if args.frequency.is_empty() {
            (0..DEFAULT_FREQUENCIES)
                .map(|k| f64::from(1u32 << k))
                .collect()
        } else {
            args.frequency.clone()
        };
        if let Some(f) = freqs.iter().find(|f| !(**f > 0.0 && f.is_finite())) {
            return Err(CliError::Usage(format!("frequency {f} must be positive")));
        }
        return Ok(tradeoff_sweep(&kb, &input.digest, &q, &freqs, &model, &cfg)?.into());
    }
    let Some(path) = &args.workload else {
        return Err(CliError::Usage(
            "tradeoff needs --query or --workload".into(),
        ));
    };
    let mut r = Report::new("tradeoff");
    r.input("kb", &input.digest);
    let (w, header) = load_workload(path, &mut r)?;
    let model = cost_model(&args.cost, Some(&header), &mut r)?;
    r.param("horizon", w.horizon)
        .param("node_budget", cfg.node_budget);
    let (base, c) = closure_for(&kb);
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for (i, (q, _)) in w.entries.iter().enumerate() {
        let Depth::Finite(d) = c.depth(q) else {
            skipped.push(q.to_string());
            continue;
        };
        let proxy = description_proxy_in(&c, &kb.system, q, &cfg)?;
        let mut row = cost_row(q, w.frequency(i), &proxy, d, &model)?;
        let cf = critical_frequency(proxy.bits as f64, d as f64, base.len(), &model);
        row.push(cf.f_star.map_or(Value::Null, num));
        rows.push(row);
    }
    let mut header_cols: Vec<&str> = TRADEOFF_HEADER.to_vec();
    header_cols.push("f_star");
    r.result = json!({"rows": table_json(&header_cols, &rows), "unreachable": skipped});
    r.uses_proxy = true;
    r.table = Some(Table {
        header: header_cols.iter().map(|s| s.to_string()).collect(),
        rows,
    });
    Ok(r.into())
}

/// Critical frequency of one query with its bisection cross-check.
pub fn fc_report(
    kb: &KnowledgeBase,
    kb_digest: &str,
    q: &Formula,
    model: &CostModel,
    cfg: &SearchConfig,
    band: Option<(f64, f64)>,
) -> Result<Report> {
    let mut r = Report::new("fc");
    r.input("kb", kb_digest).param("query", q.to_string());
    r.param("rho", num(model.rho))
        .param("c_hit", num(model.c_hit));
    r.param("node_budget", cfg.node_budget);
    let (base, c) = closure_for(kb);
    let d = c.depth(q).finite().ok_or(CoreError::UnreachableQuery)?;
    let proxy = description_proxy_in(&c, &kb.system, q, cfg)?;
    let m = base.len();
    let cf = critical_frequency(proxy.bits as f64, d as f64, m, model);
    let bisect = critical_frequency_bisect(proxy.bits as f64, d as f64, model, 1e-9);
    let loc = locality_report(kb, q)?;
    let window = band.map(|(lo, hi)| {
        r.param("c_lo", num(lo)).param("c_hi", num(hi));
        let (f_lo, f_hi) = fc_window(lo, hi, m, d as f64, model);
        json!({"derive_below": num(f_lo), "cache_above": num(f_hi)})
    });
    r.result = json!({
        "depth": d,
        "m": m,
        "proxy": proxy_json(&proxy),
        "f_star": cf.f_star.map(num),
        "f_star_bisection": bisect.map(num),
        "theory_scale": num(cf.theory_scale),
        "entropy": entropy_json(d, &proxy),
        "ratio": cf.ratio.map(num),
        "window": window,
        "locality": {
            "core_size": num(loc.a_size), "m_eff": num(loc.m_eff), "n": num(loc.n),
            "l_full": num(loc.l_full), "l_eff": num(loc.l_eff),
            "improvement": num(loc.improvement), "lambda": num(loc.lambda), "exact": loc.exact,
        },
    });
    r.uses_proxy = true;
    Ok(r)
}

fn fc(args: &FcArgs) -> Result<Outcome> {
    let input = io::read_input(&args.query.kb.kb)?;
    let kb = io::parse_kb_input(&input)?;
    let q = io::formula(&args.query.query, "--query")?;
    let model = cost_model(&args.cost, None, &mut Report::new("fc"))?;
    let cfg = SearchConfig {
        node_budget: args.query.search.node_budget,
        ..SearchConfig::default()
    };
    let band = match (args.c_lo, args.c_hi) {
        (Some(lo), Some(hi)) if lo > 0.0 && lo <= hi => Some((lo, hi)),
        (None, None) => None,
        _ => {
            return Err(CliError::Usage(
                "--c-lo and --c-hi go together with 0 < c-lo <= c-hi".into(),
            ))
        }
    };
    Ok(fc_report(&kb, &input.digest, &q, &model, &cfg, band)?.into())
}

fn candidate_set(
    path: Option<&str>,
    base: &PremiseBase,
    system: &ProofSystem,
    queries: &[(Formula, f64)],
    report: &mut Report,
) -> Result<CandidateSet> {
    let entries = match path {
        Some(p) => load_candidates(p, report)?,
        None => {
            report.param("candidates", "default");
            default_candidates(base, system, queries)
        }
    };
    Ok(CandidateSet::with_proxy_costs(entries, base, system)?)
}

fn allocate(args: &AllocateArgs) -> Result<Outcome> {
    let mut r = Report::new("allocate");
    let kb = load_kb(&args.kb.kb, &mut r)?;
    let (w, _) = load_workload(&args.workload, &mut r)?;
    r.param("budget", args.budget)
        .param("seed_size", args.seed_size)
        .param("samples", args.samples)
        .param("seed", args.seed);
    let noisy =
        match (args.lambda, has_noise_source(&args.noise)) {
            (Some(_), true) => {
                let s_o = kb.operational_base();
                let spec = noise_spec(&args.noise, &s_o, &kb.system, args.seed, &mut r)?;
                Some(apply_noise(&s_o, &spec)?)
            }
            (None, false) => None,
            _ => return Err(CliError::Usage(
                "--lambda and a noise source (--noise, --loss-rate, --pollution-rate) go together"
                    .into(),
            )),
        };
    let base = noisy
        .as_ref()
        .map_or_else(|| kb.operational_base(), |n| n.base.clone());
    let cands = candidate_set(
        args.candidates.as_deref(),
        &base,
        &kb.system,
        &w.entries,
        &mut r,
    )?;
    let mut obj = DepthObjective::with_base(&kb.system, &base, &w.entries, cands.items());
    let mean_before = obj.mean_depth(&[]);
    let (alloc, dr, robust) = match (&noisy, args.lambda) {
        (Some(n), Some(lambda)) => {
            r.param("lambda", num(lambda));
            let mut robust = RobustObjective::new(&w.entries, n, &kb.system, &cands, lambda)?;
            let a = greedy_knapsack(cands.costs(), args.budget, &mut robust, args.seed_size);
            let dr = dr_check(&mut robust, args.samples, args.seed);
            let penalty = robust.penalty(&a.selected);
            (
                a,
                dr,
                Some(json!({"lambda": num(lambda), "penalty": num(penalty),
                                "exposure": robust.exposure.iter().map(|&x| num(x)).collect::<Vec<_>>()})),
            )
        }
        _ => {
            let a = greedy_knapsack(cands.costs(), args.budget, &mut obj, args.seed_size);
            let dr = dr_check(&mut obj, args.samples, args.seed);
            (a, dr, None)
        }
    };
    let mean_after = obj.mean_depth(&alloc.selected);
    let mut result = Map::new();
    result.insert(
        "allocation".into(),
        allocation_json(&alloc, &cands, args.budget),
    );
    result.insert("candidates".into(), cands.len().into());
    result.insert("mean_depth_before".into(), num(mean_before));
    result.insert("mean_depth_after".into(), num(mean_after));
    result.insert("excluded_queries".into(), formulas(obj.excluded()));
    result.insert("dr_check".into(), dr_json(&dr));
    if let Some(v) = robust {
        result.insert("robust".into(), v);
    }
    if args.exact {
        let opt = match (&noisy, args.lambda) {
            (Some(n), Some(lambda)) => {
                let mut robust = RobustObjective::new(&w.entries, n, &kb.system, &cands, lambda)?;
                brute_force_opt(cands.costs(), args.budget, &mut robust)?
            }
            _ => brute_force_opt(cands.costs(), args.budget, &mut obj)?,
        };
        result.insert(
            "optimum".into(),
            json!({
                "allocation": allocation_json(&opt, &cands, args.budget),
                "greedy_over_optimum": if opt.objective_value > 0.0 {
                    num(alloc.objective_value / opt.objective_value)
                } else {
                    Value::Null
                },
            }),
        );
    }
    r.result = Value::Object(result);
    r.uses_proxy = true;
    Ok(r.into())
}

fn cluster(args: &ClusterArgs) -> Result<Outcome> {
    let mut r = Report::new("cluster");
    let kb = load_kb(&args.kb.kb, &mut r)?;
    let (w, _) = load_workload(&args.workload, &mut r)?;
    let cfg = ClusterConfig::default();
    r.param("delta_clust", num(args.delta_clust))
        .param("kappa_threshold", num(args.kappa_threshold))
        .param("minhash_hashes", cfg.hashes)
        .param("lsh_bands", cfg.bands)
        .param("lsh_rows", cfg.rows)
        .param("minhash_seeds", json!([0, cfg.hashes - 1]));
    let names = |qs: &[usize]| -> Value {
        qs.iter()
            .map(|&i| Value::String(w.entries[i].0.to_string()))
            .collect()
    };
    let model = cluster_queries(&w, &kb, args.delta_clust, &cfg)?;
    let clusters: Vec<Value> = model
        .clusters
        .iter()
        .map(|c| {
            json!({
                "queries": names(&c.queries),
                "core": formulas(c.core.iter()),
                "ext": formulas(c.ext.iter()),
                "supp": formulas(c.supp.iter()),
                "kappa": num(c.kappa),
                "mass": num(c.mass),
                "avg_depth": num(c.avg_depth),
            })
        })
        .collect();
    let mut result = Map::new();
    result.insert("clusters".into(), Value::Array(clusters));
    if let Some(budget) = args.budget {
        r.param("budget", budget).param("seed_size", args.seed_size);
        let base = kb.operational_base();
        let cands = candidate_set(
            args.candidates.as_deref(),
            &base,
            &kb.system,
            &w.entries,
            &mut r,
        )?;
        let (alloc, audit) = cluster_aware_allocate(
            &w,
            &kb,
            &cands,
            budget,
            args.delta_clust,
            args.kappa_threshold,
            args.seed_size,
            &cfg,
        )?;
        let entries: Vec<Value> = audit
            .entries
            .iter()
            .map(|e| {
                json!({
                    "queries": names(&e.queries),
                    "kappa": num(e.kappa),
                    "core_size": e.core_size,
                    "action": e.action.as_str(),
                    "parts": e.parts.iter().map(|p| names(p)).collect::<Vec<_>>(),
                })
            })
            .collect();
        result.insert("audit".into(), Value::Array(entries));
        result.insert(
            "reduced_candidates".into(),
            formulas(audit.reduced.iter().map(|&i| cands.item(i))),
        );
        result.insert("allocation".into(), allocation_json(&alloc, &cands, budget));
        r.uses_proxy = true;
    }
    r.result = Value::Object(result);
    Ok(r.into())
}

/// Perturbation and cost comparison of one query under a noise spec.
pub fn noise_report(
    kb: &KnowledgeBase,
    kb_digest: &str,
    q: &Formula,
    spec: &NoiseSpec,
    model: &CostModel,
    frequency: f64,
) -> Result<Report> {
    let mut r = Report::new("noise");
    r.input("kb", kb_digest).param("query", q.to_string());
    r.param("rho", num(model.rho))
        .param("c_hit", num(model.c_hit));
    r.param("frequency", num(frequency));
    noise_result(&mut r, kb, q, spec, model, frequency)?;
    Ok(r)
}

fn noise_result(
    r: &mut Report,
    kb: &KnowledgeBase,
    q: &Formula,
    spec: &NoiseSpec,
    model: &CostModel,
    frequency: f64,
) -> Result<()> {
    let base = kb.operational_base();
    let p = perturbation_report(q, &base, spec, &kb.system)?;
    let conv = base_conversion_bits(&base, spec)?;
    let t = noisy_tradeoff(q, &base, spec, &kb.system, model, frequency)?;
    let costs = |c: &kbcost_core::tradeoff::AmortizedCosts| {
        json!({"cost_cache": num(c.cost_cache), "cost_derive": num(c.cost_derive),
               "winner": c.winner.as_str()})
    };
    r.result = json!({
        "lost": formulas(spec.lost.iter()),
        "spurious": formulas(spec.spurious.iter()),
        "perturbation": {
            "depth": depth_value(p.n),
            "preserved_depth": depth_value(p.preserved_depth),
            "noisy_depth": depth_value(p.noisy_depth),
            "d_rec": depth_value(p.d_rec),
            "degrade_holds": p.degrade_holds,
            "degrade_tight": p.degrade_tight,
            "noisy_le_preserved": p.noisy_le_preserved,
            "loss_inflation_holds": p.loss_inflation_holds,
            "pollution_deflation_holds": p.pollution_deflation_holds,
            "relative_inflation": p.relative_inflation.map(num),
        },
        "conversion": {
            "bits": conv.bits, "header_bits": conv.header_bits, "universe": conv.universe,
            "index_width": conv.index_width, "bound_holds": conv.bound_holds,
        },
        "noisy": {
            "depth": t.noisy_depth,
            "proxy_bits": t.noisy_proxy,
            "costs": costs(&t.noisy_costs),
            "f_star": t.noisy_critical.f_star.map(num),
        },
        "clean": {
            "depth": t.clean_depth,
            "proxy_bits": t.clean_proxy,
            "costs": t.clean_costs.as_ref().map(costs),
            "f_star": t.clean_critical.and_then(|c| c.f_star).map(num),
        },
        "no_worse": t.no_worse.map(|n| json!({
            "noisy_optimum": num(n.noisy_optimum), "clean_optimum": num(n.clean_optimum),
            "allowance": num(n.allowance), "holds": n.holds,
        })),
    });
    r.uses_proxy = true;
    Ok(())
}

fn noise(args: &NoiseArgs) -> Result<Outcome> {
    let mut r = Report::new("noise");
    let kb = load_kb(&args.kb.kb, &mut r)?;
    let q = query(&args.query, &mut r)?;
    let model = cost_model(&args.cost, None, &mut r)?;
    r.param("frequency", num(args.frequency))
        .param("seed", args.seed);
    if !(args.frequency > 0.0 && args.frequency.is_finite()) {
        return Err(CliError::Usage("--frequency must be positive".into()));
    }
    let spec = noise_spec(
        &args.noise,
        &kb.operational_base(),
        &kb.system,
        args.seed,
        &mut r,
    )?;
    noise_result(&mut r, &kb, &q, &spec, &model, args.frequency)?;
    Ok(r.into())
}

fn twophase(args: &TwoPhaseArgs) -> Result<Outcome> {
    let mut r = Report::new("twophase");
    let kb = load_kb(&args.kb.kb, &mut r)?;
    let (w, _) = load_workload(&args.workload, &mut r)?;
    r.param("sla_depth", args.sla_depth)
        .param("budget", args.budget)
        .param("seed_size", args.seed_size)
        .param("samples", args.samples)
        .param("seed", args.seed);
    let base = kb.operational_base();
    let spec = noise_spec(&args.noise, &base, &kb.system, args.seed, &mut r)?;
    let noisy = apply_noise(&base, &spec)?;
    let cands = candidate_set(
        args.candidates.as_deref(),
        &noisy.base,
        &kb.system,
        &w.entries,
        &mut r,
    )?;
    let out = two_phase_allocate(
        &w.entries,
        &base,
        &spec,
        &kb.system,
        &cands,
        SlaConfig {
            h: args.sla_depth,
            budget: args.budget,
        },
        args.seed_size,
        args.samples,
        args.seed,
    )?;
    let sets_json = |s: &kbcost_core::noise::CriticalSets| {
        json!({"critical": formulas(s.crit.iter()), "reconstructible": formulas(s.rec.iter()),
               "irrecoverable": formulas(s.irr.iter()), "skipped_queries": formulas(s.skipped.iter())})
    };
    let mut failure = None;
    r.result = match &out {
        TwoPhaseOutcome::Feasible(a) => json!({
            "feasible": true,
            "lost": formulas(spec.lost.iter()),
            "spurious": formulas(spec.spurious.iter()),
            "sets": sets_json(&a.sets),
            "compensation_cost": a.comp_cost,
            "compensation_bound_holds": a.comp_bound_holds,
            "phase2": allocation_json(&a.phase2, &cands, args.budget - a.comp_cost),
            "selected": formulas(a.selected.iter()),
            "total_cost": a.total_cost,
            "depths": a.depths.iter().map(|&d| depth_value(d)).collect::<Vec<_>>(),
            "max_depth": a.max_depth,
            "dr_check": dr_json(&a.dr),
            "guarantee": a.guarantee.as_str(),
        }),
        TwoPhaseOutcome::Infeasible {
            sets,
            comp_cost,
            reasons,
        } => {
            failure = Some("no allocation meets the SLA".to_string());
            let reasons: Vec<Value> = reasons
                .iter()
                .map(|x| match x {
                    InfeasibleReason::Irrecoverable(fs) => {
                        json!({"kind": "irrecoverable", "premises": formulas(fs)})
                    }
                    InfeasibleReason::BudgetShort { needed, budget } => {
                        json!({"kind": "budget_short", "needed": needed, "budget": budget})
                    }
                    InfeasibleReason::SlaUnmet { query, depth, h } => json!({
                        "kind": "sla_unmet", "query": query.to_string(),
                        "depth": depth_value(*depth), "h": h,
                    }),
                })
                .collect();
            json!({
                "feasible": false,
                "lost": formulas(spec.lost.iter()),
                "spurious": formulas(spec.spurious.iter()),
                "sets": sets_json(sets),
                "compensation_cost": comp_cost,
                "reasons": reasons,
            })
        }
    };
    r.uses_proxy = true;
    Ok(Outcome { report: r, failure })
}

/// Largest instance for which the census is cross-checked by enumeration.
const ENUMERATE_MAX: (u64, u64) = (7, 3);

fn richness(args: &RichnessArgs) -> Result<Outcome> {
    let mut r = Report::new("richness");
    r.param("m", args.m)
        .param("n", args.n)
        .param("delta0", num(args.delta0));
    let c = richness_census(args.m, args.n, args.delta0)?;
    let enumerated = (args.m <= ENUMERATE_MAX.0 && args.n <= ENUMERATE_MAX.1)
        .then(|| enumerate_census(args.m as usize, args.n as usize))
        .transpose()?;
    r.result = json!({
        "count": c.count.map(|x| x.to_string()),
        "log2_count": num(c.log2_count),
        "log2_bound": num(c.log2_bound),
        "satisfied": c.satisfied,
        "enumerated": enumerated.map(|x| x.to_string()),
        "enumeration_matches": enumerated.map(|e| Some(e) == c.count),
    });
    Ok(r.into())
}

/// Tightness family report.
pub fn tightness_report(m: usize, samples: usize, seed: u64) -> Result<Report> {
    let mut r = Report::new("tightness");
    r.param("m", m)
        .param("samples", samples)
        .param("seed", seed);
    let t = tightness_suite(m, samples, seed)?;
    r.result = json!({
        "n": t.n,
        "depths_match": t.depths_match,
        "ratio_min": num(t.ratio_min),
        "ratio_max": num(t.ratio_max),
        "samples": t.samples.iter().map(|s| json!({
            "indices": s.indices, "depth": depth_value(s.depth), "trace_len": s.trace_len,
            "proxy_bits": s.proxy_bits, "proxy_source": s.proxy_source.as_str(),
            "proxy_ratio": num(s.ratio),
        })).collect::<Vec<_>>(),
    });
    r.uses_proxy = true;
    let header = [
        "indices",
        "depth",
        "trace_len",
        "proxy_bits",
        "proxy_source",
        "proxy_ratio",
    ];
    r.table = Some(Table {
        header: header.iter().map(|s| s.to_string()).collect(),
        rows: t
            .samples
            .iter()
            .map(|s| {
                vec![
                    Value::String(
                        s.indices
                            .iter()
                            .map(|i| i.to_string())
                            .collect::<Vec<_>>()
                            .join(" "),
                    ),
                    depth_value(s.depth),
                    s.trace_len.into(),
                    s.proxy_bits.into(),
                    s.proxy_source.as_str().into(),
                    num(s.ratio),
                ]
            })
            .collect(),
    });
    Ok(r)
}

fn tightness(args: &TightnessArgs) -> Result<Outcome> {
    let r = tightness_report(args.m, args.samples, args.seed)?;
    let ok = r.result["depths_match"].as_bool() == Some(true);
    Ok(Outcome {
        report: r,
        failure: (!ok).then(|| "a sampled depth differs from n".to_string()),
    })
}

fn verify_cmd(args: &VerifyArgs) -> Result<Outcome> {
    let mut r = Report::new("verify");
    r.param("seed", args.seed)
        .param("quick", args.quick)
        .param("criteria", args.criteria)
        .param("serial_bound", num(args.serial_bound));
    let cfg = SuiteConfig {
        seed: args.seed,
        quick: args.quick,
        serial_bound: args.serial_bound,
    };
    let checks = verify::invariant_suite(&cfg);
    let mut failed: Vec<String> = checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| format!("{}/{}", c.module, c.name))
        .collect();
    let mut result = Map::new();
    result.insert(
        "invariants".into(),
        checks.iter().map(|c| c.to_json()).collect(),
    );
    if args.criteria {
        let crit: Vec<_> = verify::CRITERIA
            .iter()
            .map(|&id| verify::criterion(id, args.seed))
            .collect();
        failed.extend(
            crit.iter()
                .filter(|c| !(c.passed && c.within_limit()))
                .map(|c| format!("criterion {}", c.id)),
        );
        for c in &crit {
            eprintln!("{}", c.line());
        }
        result.insert(
            "criteria".into(),
            crit.iter().map(|c| c.to_json()).collect(),
        );
    }
    result.insert("failed".into(), failed.clone().into());
    r.result = Value::Object(result);
    r.uses_proxy = true;
    Ok(Outcome {
        report: r,
        failure: (!failed.is_empty()).then(|| format!("{} checks failed", failed.len())),
    })
}

/// Reports from every command that derives fields from the description
/// proxy, built on a small in-memory instance.
pub fn proxy_report_samples() -> Vec<Report> {
    let text = "x(a).\ny(a).\np(X) :- x(X).\nq(X) :- p(X), y(X).\n";
    let kb = parse_kb(text).expect("fixed KB parses");
    let digest = io::digest(text.as_bytes());
    let q = io::formula("q(a) & x(a)", "sample").expect("fixed query parses");
    let model = CostModel::default();
    let cfg = SearchConfig::default();
    let spec = NoiseSpec::new(
        [io::formula("y(a)", "sample").expect("parses")].into(),
        BTreeSet::new(),
    );
    let _ = Vocabulary::default();
    let mut out = Vec::new();
    out.extend(tradeoff_sweep(&kb, &digest, &q, &[1.0, 100.0], &model, &cfg).ok());
    out.extend(fc_report(&kb, &digest, &q, &model, &cfg, Some((1.0, 2.0))).ok());
    out.extend(tightness_report(16, 3, 1).ok());
    let p = io::formula("p(a)", "sample").expect("parses");
    out.extend(noise_report(&kb, &digest, &p, &spec, &model, 10.0).ok());
    out
}
