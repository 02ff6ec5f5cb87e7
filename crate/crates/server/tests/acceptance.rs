//! Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero if
//! any criterion fails.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::{coherent, direct, normalize, Api};
use fdconfig_core::consequences::{valid_domains_enumerate, valid_domains_probe, ConsequenceError};
use fdconfig_core::model::parse_model;
use fdconfig_core::session::{prepare_model, DecisionId, PreparedModel, Rejected, Restriction, SessionEvent};
use fdconfig_core::solver::{CancelToken, Domain, Visit};
use fdconfig_core::testkit::{large_model, oracle, random_model, SmallBounds, M1};
use fdconfig_core::translate::{compile, project};
use fdconfig_core::{FeatureModel, Session, SessionSnapshot};
use parking_lot::Mutex;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::json;

const CORPUS: u64 = 200;
const WAIT: Duration = Duration::from_secs(60);

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn corpus() -> impl Iterator<Item = (u64, FeatureModel)> {
    (0..CORPUS).map(|seed| (seed, random_model(&mut StdRng::seed_from_u64(seed), &SmallBounds::default())))
}

fn feasible(rng: &mut StdRng) -> (FeatureModel, PreparedModel) {
    loop {
        let m = random_model(rng, &SmallBounds::default());
        if let Ok(p) = prepare_model(&m) {
            return (m, p);
        }
    }
}

fn compatible(rng: &mut StdRng, d: &Domain) -> Restriction {
    let vals: Vec<i64> = d.iter().collect();
    let v = vals[rng.gen_range(0..vals.len())];
    match rng.gen_range(0..3) {
        0 => Restriction::Assign(v),
        1 if vals.len() > 1 => Restriction::Exclude(vals[rng.gen_range(0..vals.len())]),
        _ => Restriction::Range { lo: v - rng.gen_range(0..2), hi: v + rng.gen_range(0..3) },
    }
}

fn decisions_of(s: &SessionSnapshot) -> Vec<(String, Restriction)> {
    s.decisions.iter().map(|d| (d.variable.clone(), d.restriction)).collect()
}

fn ready(s: &SessionSnapshot) -> Vec<(String, Domain)> {
    s.variables.iter().map(|v| (v.name.clone(), v.values.clone().expect("ready"))).collect()
}

fn encoding_oracle() -> Outcome {
    let start = Instant::now();
    let mut products = 0;
    for (seed, m) in corpus() {
        let mut cm = compile(&m).map_err(|e| format!("seed {seed}: {e}"))?;
        let vmap = cm.vmap.clone();
        let mut got = Vec::new();
        cm.solver
            .enumerate(u64::MAX, None, |s| {
                got.push(project(s, &vmap).values());
                Visit::Continue
            })
            .map_err(|e| e.to_string())?;
        let n = got.len();
        let got: BTreeSet<_> = got.into_iter().collect();
        let want: BTreeSet<_> = oracle::products(&m).into_iter().collect();
        ensure!(got.len() == n, "seed {seed}: a product was produced twice");
        ensure!(got == want, "seed {seed}: {} solver products vs {} oracle products", got.len(), want.len());
        products += n;
    }
    let t = start.elapsed();
    ensure!(t < Duration::from_secs(60), "took {t:?} (limit 60 s)");
    Ok(format!("{CORPUS} models, {products} products, {t:.2?} (< 60 s)"))
}

fn consequence_oracle() -> Outcome {
    let mut feasible = 0;
    for (seed, m) in corpus() {
        let mut cm = compile(&m).map_err(|e| format!("seed {seed}: {e}"))?;
        let e = valid_domains_enumerate(&mut cm, u64::MAX).map_err(|e| format!("seed {seed}: {e}"))?;
        let p = valid_domains_probe(&mut cm, &CancelToken::new(), |_, _| {}).map_err(|e| format!("seed {seed}: {e}"))?;
        let want = oracle::valid_domains(&m, &[]);
        ensure!(p.entries == want, "seed {seed}: probe differs from brute force");
        ensure!(e.entries == want, "seed {seed}: enumerate differs from brute force");
        feasible += usize::from(want.iter().all(|(_, d)| !d.is_empty()));
    }
    Ok(format!("{CORPUS} models ({feasible} feasible), probe == enumerate == brute force"))
}

fn m1_fixture() -> Outcome {
    let m = parse_model(M1).map_err(|e| e.to_string())?;
    let products = oracle::products(&m);
    ensure!(products.len() == 7, "oracle counts {}", products.len());
    let mut cm = compile(&m).map_err(|e| e.to_string())?;
    let e = valid_domains_enumerate(&mut cm, u64::MAX).map_err(|e| e.to_string())?;
    ensure!(e.solution_count == Some(7), "solver counts {:?}", e.solution_count);

    let dom = |s: &[(i64, i64)]| Domain::from_intervals(s.iter().copied());
    let initial = vec![
        ("Phone".to_string(), dom(&[(1, 1)])),
        ("Screen".to_string(), dom(&[(1, 1)])),
        ("GPS".to_string(), dom(&[(0, 1)])),
        ("Basic".to_string(), dom(&[(0, 1)])),
        ("HD".to_string(), dom(&[(0, 1)])),
        ("GPS.price".to_string(), dom(&[(0, 3)])),
    ];
    let sorted = |mut v: Vec<(String, Domain)>| {
        v.sort_by(|a, b| a.0.cmp(&b.0));
        v
    };
    ensure!(sorted(oracle::valid_domains(&m, &[])) == sorted(initial.clone()), "oracle disagrees with the expected map");
    let s = Session::create(&m).map_err(|e| e.to_string())?;
    ensure!(sorted(s.model_consequences().entries.clone()) == sorted(initial), "model consequences differ");

    s.post_decision("HD", Restriction::Assign(1)).map_err(|e| e.to_string())?;
    ensure!(s.wait_idle(WAIT), "HD=1 recomputation did not finish");
    let st = s.state();
    ensure!(ready(&st) == oracle::valid_domains(&m, &[("HD".into(), Restriction::Assign(1))]), "HD=1 differs from oracle");
    for (name, want) in [("Basic", dom(&[(0, 0)])), ("GPS", dom(&[(1, 1)])), ("GPS.price", dom(&[(1, 3)]))] {
        ensure!(st.values(name) == Some(&want), "{name} = {:?} after HD=1", st.values(name));
    }
    Ok("7 products; model consequences and HD=1 consequences exact".into())
}

fn feasibility_guarantee() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0xfea5);
    let (mut states, mut infeasible) = (0, 0);
    let mut first_bad = None;
    for seq in 0..1000 {
        let (m, p) = feasible(&mut rng);
        let names = oracle::var_names(&m);
        let products = oracle::products(&m);
        let s = Session::from_prepared(&p).map_err(|e| e.to_string())?;
        for _ in 0..rng.gen_range(1..=6) {
            let st = s.state();
            let i = rng.gen_range(0..st.variables.len());
            let r = compatible(&mut rng, st.variables[i].values.as_ref().expect("settled"));
            s.post_decision(&st.variables[i].name, r).map_err(|e| format!("sequence {seq}: {e}"))?;
            ensure!(s.wait_idle(WAIT), "sequence {seq}: recomputation hung");
            let st = s.state();
            states += 1;
            if oracle::filter_products(&names, &products, &decisions_of(&st)).is_empty() {
                infeasible += 1;
                first_bad.get_or_insert(seq);
            }
        }
    }
    ensure!(infeasible == 0, "{infeasible} infeasible states, first in sequence {first_bad:?}");
    Ok(format!("1000 sequences, {states} states, 0 infeasible"))
}

fn retraction_equivalence() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0x2e72);
    let mut retractions = 0;
    for case in 0..200 {
        let (_, p) = feasible(&mut rng);
        let s = Session::from_prepared(&p).map_err(|e| e.to_string())?;
        for _ in 0..rng.gen_range(2..10) {
            let st = s.state();
            if !st.decisions.is_empty() && rng.gen_bool(0.4) {
                // Any decision, not just the latest.
                let d = &st.decisions[rng.gen_range(0..st.decisions.len())];
                s.retract_decision(d.id).map_err(|e| e.to_string())?;
                retractions += 1;
            } else {
                let i = rng.gen_range(0..st.variables.len());
                let r = compatible(&mut rng, st.variables[i].values.as_ref().expect("settled"));
                s.post_decision(&st.variables[i].name, r).map_err(|e| e.to_string())?;
            }
            ensure!(s.wait_idle(WAIT), "case {case}: recomputation hung");
        }
        let st = s.state();
        let fresh = Session::from_prepared(&p).map_err(|e| e.to_string())?;
        for d in &st.decisions {
            fresh.post_decision(&d.variable, d.restriction).map_err(|e| format!("case {case}: {e}"))?;
            ensure!(fresh.wait_idle(WAIT), "case {case}: fresh replay hung");
        }
        let fs = fresh.state();
        ensure!(decisions_of(&st) == decisions_of(&fs), "case {case}: decision lists differ");
        ensure!(st.variables == fs.variables, "case {case}: consequences differ");
        ensure!(s.solver_domains() == fresh.solver_domains(), "case {case}: solver domains differ");
    }
    Ok(format!("200 interleavings, {retractions} retractions, all equal to fresh replay"))
}

fn ground_reset() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0x960d);
    let mut checks = 0;
    for case in 0..200 {
        let (_, p) = feasible(&mut rng);
        let s = Session::from_prepared(&p).map_err(|e| e.to_string())?;
        let ground = s.ground_domains().to_vec();
        for _ in 0..rng.gen_range(1..8) {
            let st = s.state();
            if !st.decisions.is_empty() && rng.gen_bool(0.3) {
                s.retract_decision(st.decisions[0].id).map_err(|e| e.to_string())?;
            } else if let Some(i) = (0..st.variables.len()).find(|&i| st.variables[i].values.is_some()) {
                let i = if rng.gen_bool(0.5) { rng.gen_range(i..st.variables.len()) } else { i };
                if let Some(d) = &st.variables[i].values {
                    let _ = s.post_decision(&st.variables[i].name, compatible(&mut rng, d));
                }
            }
            // Check mid-computation as well as at rest.
            if rng.gen_bool(0.5) {
                ensure!(s.wait_idle(WAIT), "case {case}: recomputation hung");
            }
            ensure!(s.verify_ground_reset(), "case {case}: reset to ground differs from the recorded snapshot");
            checks += 1;
        }
        ensure!(s.ground_domains() == &ground[..], "case {case}: ground snapshot changed");
    }
    Ok(format!("{checks} resets bit-identical"))
}

fn anytime_consistency() -> Outcome {
    // Injected cancellation at probe boundaries.
    let mut rng = StdRng::seed_from_u64(0xa2e1);
    let mut cancelled = 0;
    for (seed, m) in corpus() {
        let mut cm = compile(&m).map_err(|e| e.to_string())?;
        let full = valid_domains_probe(&mut cm, &CancelToken::new(), |_, _| {}).map_err(|e| e.to_string())?;
        let k = rng.gen_range(0..=full.entries.len());
        let token = CancelToken::new();
        if k == 0 {
            token.cancel();
        }
        let mut emitted = Vec::new();
        let r = valid_domains_probe(&mut cm, &token, |n, d| {
            emitted.push((n.to_string(), d.clone()));
            if emitted.len() == k {
                token.cancel();
            }
        });
        match r {
            Ok(c) => ensure!(c.entries == full.entries, "seed {seed}: uncancelled run differs"),
            Err(ConsequenceError::Cancelled { partial }) => {
                cancelled += 1;
                ensure!(partial.entries == emitted, "seed {seed}: partial result differs from emitted entries");
                ensure!(emitted[..] == full.entries[..emitted.len()], "seed {seed}: an emitted domain differs");
            }
            Err(e) => return Err(format!("seed {seed}: {e}")),
        }
    }

    // Epoch safety under rapid decisions that supersede running epochs.
    let mut events = 0;
    for case in 0..100 {
        let (m, p) = feasible(&mut rng);
        let names = oracle::var_names(&m);
        let products = oracle::products(&m);
        let s = Session::from_prepared(&p).map_err(|e| e.to_string())?;
        let log = Arc::new(Mutex::new(Vec::<SessionEvent>::new()));
        let sink = Arc::clone(&log);
        s.subscribe(move |e| {
            sink.lock().push(e.clone());
            true
        });
        let mut epoch_decisions = vec![(0, Vec::new())];
        for _ in 0..rng.gen_range(2..10) {
            let st = s.state();
            if !st.decisions.is_empty() && rng.gen_bool(0.3) {
                s.retract_decision(st.decisions[0].id).map_err(|e| e.to_string())?;
            } else {
                let i = rng.gen_range(0..st.variables.len());
                if let Some(d) = &st.variables[i].values {
                    match s.post_decision(&st.variables[i].name, compatible(&mut rng, d)) {
                        Ok(_) | Err(Rejected::VariablePending(_)) => {}
                        Err(e) => return Err(format!("case {case}: {e}")),
                    }
                }
            }
            let st = s.state();
            epoch_decisions.push((st.epoch, decisions_of(&st)));
        }
        ensure!(s.wait_idle(WAIT), "case {case}: recomputation hung");
        let final_state = s.state();
        let log = log.lock();
        events += log.len();
        let mut current = 0;
        for e in log.iter() {
            match e {
                SessionEvent::Epoch { epoch } => current = *epoch,
                SessionEvent::VariableReady { epoch, variable, values } => {
                    ensure!(*epoch == current, "case {case}: epoch {epoch} result reported during epoch {current}");
                    let ds = &epoch_decisions.iter().rev().find(|(e, _)| e == epoch).expect("epoch recorded").1;
                    let want = oracle::domains_of(&names, &oracle::filter_products(&names, &products, ds));
                    let w = &want.iter().find(|(n, _)| n == variable).expect("known variable").1;
                    ensure!(values == w, "case {case}: {variable} at epoch {epoch} is {values}, oracle {w}");
                }
                SessionEvent::Complete { epoch } => ensure!(*epoch == current, "case {case}: stale complete"),
            }
        }
        ensure!(current == final_state.epoch, "case {case}: stream ended at epoch {current}");
    }
    Ok(format!("{cancelled} cancelled probes are exact prefixes; {events} events, none cross epochs"))
}

fn performance() -> Outcome {
    let (mut worst_pre, mut worst_dec) = (Duration::ZERO, Duration::ZERO);
    for seed in 1..=5 {
        let m = large_model(seed);
        let features = m.features.len();
        let attrs = m.attributes.len();
        let biggest = m.attributes.iter().map(|a| a.hi - a.lo + 1).max().unwrap_or(0);
        ensure!(features == 50 && attrs == 10 && biggest <= 20, "generator gave {features} features, {attrs} attributes");
        let start = Instant::now();
        let p = prepare_model(&m).map_err(|e| e.to_string())?;
        let pre = start.elapsed();
        ensure!(p.consequences.complete, "seed {seed}: model consequences incomplete");
        ensure!(pre < Duration::from_secs(5), "seed {seed}: model consequences took {pre:?} (limit 5 s)");

        let s = Session::from_prepared(&p).map_err(|e| e.to_string())?;
        let st = s.state();
        let (name, d) = st
            .variables
            .iter()
            .rev()
            .find_map(|v| v.values.as_ref().filter(|d| d.size() > 1).map(|d| (v.name.clone(), d.clone())))
            .ok_or("no open variable")?;
        let start = Instant::now();
        s.post_decision(&name, Restriction::Assign(d.max().unwrap())).map_err(|e| e.to_string())?;
        ensure!(s.wait_idle(Duration::from_secs(30)), "seed {seed}: decision recomputation hung");
        let dec = start.elapsed();
        ensure!(s.state().all_ready(), "seed {seed}: decision recomputation hit the node budget");
        ensure!(dec < Duration::from_secs(2), "seed {seed}: decision recomputation took {dec:?} (limit 2 s)");
        worst_pre = worst_pre.max(pre);
        worst_dec = worst_dec.max(dec);
    }
    Ok(format!("5 large models; worst model consequences {worst_pre:.2?} (< 5 s), worst decision {worst_dec:.2?} (< 2 s)"))
}

async fn api_equivalence() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0xa91);
    let api = Api::new();
    let mut compared = 0;
    for case in 0..40 {
        let (m, p) = feasible(&mut rng);
        let text = fdconfig_core::model::serialize_model(&m);
        let sid = api.open(&text).await;
        let mut stream = api.events(&sid).await;
        let mut log = stream.until_complete(0, WAIT).await;
        let d = Session::from_prepared(&p).map_err(|e| e.to_string())?;
        let snap = api.settled(&sid, WAIT).await;
        ensure!(normalize(snap.clone()) == direct(&d.state()), "case {case}: initial snapshots differ");
        coherent(&log, &snap).map_err(|e| format!("case {case}: {e}"))?;
        for _ in 0..rng.gen_range(1..7) {
            let st = d.state();
            if !st.decisions.is_empty() && rng.gen_bool(0.35) {
                let id = st.decisions[rng.gen_range(0..st.decisions.len())].id;
                let (status, body) = api.delete(&format!("/sessions/{sid}/decisions/{}", id.0)).await;
                ensure!(status == 204, "case {case}: DELETE gave {status} {body}");
                d.retract_decision(DecisionId(id.0)).map_err(|e| e.to_string())?;
            } else {
                let i = rng.gen_range(0..st.variables.len());
                let r = compatible(&mut rng, st.variables[i].values.as_ref().expect("settled"));
                let body = json!({ "variable": st.variables[i].name, "restriction": r });
                let (status, resp) = api.post_json(&format!("/sessions/{sid}/decisions"), &body).await;
                ensure!(status == 201, "case {case}: POST gave {status} {resp}");
                d.post_decision(&st.variables[i].name, r).map_err(|e| e.to_string())?;
            }
            ensure!(d.wait_idle(WAIT), "case {case}: direct session hung");
            let snap = api.settled(&sid, WAIT).await;
            let epoch = snap["epoch"].as_u64().unwrap();
            ensure!(normalize(snap.clone()) == direct(&d.state()), "case {case}: snapshots differ at epoch {epoch}");
            log.extend(stream.until_complete(epoch, WAIT).await);
            coherent(&log, &snap).map_err(|e| format!("case {case}: {e}"))?;
            compared += 1;
        }
    }
    Ok(format!("40 scripts, {compared} snapshots identical; event streams coherent"))
}

fn run(name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let r = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
    });
    match r {
        Ok(detail) => {
            println!("PASS {name}: {detail} [{:.1?}]", start.elapsed());
            true
        }
        Err(why) => {
            println!("FAIL {name}: {why}");
            false
        }
    }
}

fn main() {
    let rt = tokio::runtime::Runtime::new().unwrap();
    let mut ok = true;
    ok &= run("oracle-equivalence-encoding", encoding_oracle);
    ok &= run("oracle-equivalence-consequences", consequence_oracle);
    ok &= run("m1-fixture", m1_fixture);
    ok &= run("feasibility-guarantee", feasibility_guarantee);
    ok &= run("retraction-equivalence", retraction_equivalence);
    ok &= run("ground-reset-exactness", ground_reset);
    ok &= run("anytime-consistency", anytime_consistency);
    ok &= run("desk-scale-performance", performance);
    ok &= run("api-equivalence", || rt.block_on(api_equivalence()));
    if !ok {
        std::process::exit(1);
    }
}
