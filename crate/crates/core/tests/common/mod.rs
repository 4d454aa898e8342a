//! Shared fixtures and brute-force reference implementations for the
//! integration suites and the acceptance runner.
#![allow(dead_code)]

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use talk2bev::bench::{prepare_scene, BenchScene, SceneSources, TemplateQuestionLlm, DEFAULT_PER_CATEGORY};
use talk2bev::bench::queries::DEFAULT_QUERIES_PER_SCENE;
use talk2bev::captioning::{mock_annotators, BuildOptions, MockCaptioner};
use talk2bev::grid::GridMeta;
use talk2bev::map::{BevSource, LanguageEnhancedMap, MapObject, ObjectId, Provenance};
use talk2bev::orchestrator::{eval_call, parse_call, Arg, CallExpr};
use talk2bev::spatial::{ArgValue, ObjectSet, SpatialValue, REGISTRY};
use talk2bev::synth::{generate_synthetic_scene, SynthParams};

/// Positions are whole quarter meters so the reference code can work in
/// exact integer arithmetic.
pub const Q: f64 = 0.25;

#[derive(Debug, Clone, Copy)]
pub struct RefObj {
    pub id: ObjectId,
    pub qx: i64,
    pub qy: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RefValue {
    Set(Vec<ObjectId>),
    Dist(f64),
}

pub fn random_scene(rng: &mut ChaCha8Rng, token: &str) -> (LanguageEnhancedMap, Vec<RefObj>) {
    let n = rng.gen_range(0..=30);
    let mut ids: Vec<ObjectId> = (1..=99).collect();
    ids.shuffle(rng);
    // a tight spread forces many equal distances
    let spread: i64 = if rng.gen_bool(0.5) { 160 } else { 12 };
    let refs: Vec<RefObj> = ids[..n]
        .iter()
        .map(|&id| RefObj {
            id,
            qx: rng.gen_range(-spread..=spread),
            qy: rng.gen_range(-spread..=spread),
        })
        .collect();
    let meta = GridMeta::default();
    let objects = refs
        .iter()
        .map(|r| {
            let mut o = MapObject::from_cells(r.id, vec![], &meta);
            o.position = (r.qx as f64 * Q, r.qy as f64 * Q);
            o
        })
        .collect();
    let map = LanguageEnhancedMap::new(token, meta, Provenance::new("test", BevSource::Synthetic), objects);
    (map, refs)
}

fn d2(a: (i64, i64), b: &RefObj) -> i64 {
    let (dx, dy) = (b.qx - a.0, b.qy - a.1);
    dx * dx + dy * dy
}

fn by_id(mut v: Vec<ObjectId>) -> Vec<ObjectId> {
    v.sort_unstable();
    v
}

/// Distance arguments are quarter-meter multiples; `None` for an invalid one.
fn quarters(m: f64) -> Option<i64> {
    (m.is_finite() && m >= 0.0).then(|| (m / Q).round() as i64)
}

pub fn ref_direction(name: &str, objs: &[RefObj]) -> Vec<ObjectId> {
    let keep = |o: &RefObj| match name {
        "front_filter" => o.qx > 0,
        "rear_filter" => o.qx < 0,
        "left_filter" => o.qy > 0,
        "right_filter" => o.qy < 0,
        _ => unreachable!(),
    };
    by_id(objs.iter().filter(|o| keep(o)).map(|o| o.id).collect())
}

pub fn ref_within(objs: &[RefObj], anchor: (i64, i64), skip: Option<ObjectId>, radius_q: i64) -> Vec<ObjectId> {
    by_id(
        objs.iter()
            .filter(|o| Some(o.id) != skip && d2(anchor, o) <= radius_q * radius_q)
            .map(|o| o.id)
            .collect(),
    )
}

/// Rank of each candidate = number of candidates strictly ahead of it.
pub fn ref_k(objs: &[RefObj], anchor: (i64, i64), skip: Option<ObjectId>, k: usize, farthest: bool) -> Vec<ObjectId> {
    let cands: Vec<&RefObj> = objs.iter().filter(|o| Some(o.id) != skip).collect();
    let key = |o: &RefObj| (if farthest { -d2(anchor, o) } else { d2(anchor, o) }, o.id);
    let mut ranked: Vec<(usize, ObjectId)> = cands
        .iter()
        .map(|c| (cands.iter().filter(|o| key(o) < key(c)).count(), c.id))
        .filter(|(rank, _)| *rank < k)
        .collect();
    ranked.sort_unstable();
    ranked.into_iter().map(|(_, id)| id).collect()
}

pub fn ref_dist(a: (i64, i64), b: (i64, i64)) -> f64 {
    let (dx, dy) = ((a.0 - b.0) as f64, (a.1 - b.1) as f64);
    (dx * dx + dy * dy).sqrt() * Q
}

pub fn find_ref(universe: &[RefObj], id: i64) -> Option<RefObj> {
    universe.iter().find(|o| o.id as i64 == id).copied()
}

#[derive(Debug, Clone, Copy)]
pub enum RefArg {
    Int(i64),
    Meters(f64),
}

impl RefArg {
    fn int(self) -> Option<i64> {
        match self {
            RefArg::Int(v) => Some(v),
            RefArg::Meters(_) => None,
        }
    }

    fn meters(self) -> f64 {
        match self {
            RefArg::Int(v) => v as f64,
            RefArg::Meters(m) => m,
        }
    }
}

/// Reference semantics of one operator. Ids resolve against the whole map.
pub fn ref_apply(name: &str, objs: &[RefObj], args: &[RefArg], universe: &[RefObj]) -> Result<RefValue, ()> {
    let id = |i: usize| args[i].int().and_then(|v| find_ref(universe, v)).ok_or(());
    let count = |i: usize| args[i].int().filter(|v| *v >= 0).map(|v| v as usize).ok_or(());
    let meters = |i: usize| quarters(args[i].meters()).ok_or(());
    Ok(match name {
        "front_filter" | "rear_filter" | "left_filter" | "right_filter" => RefValue::Set(ref_direction(name, objs)),
        "dist_filter" => RefValue::Set(ref_within(objs, (0, 0), None, meters(0)?)),
        "k_closest" => RefValue::Set(ref_k(objs, (0, 0), None, count(0)?, false)),
        "k_farthest" => RefValue::Set(ref_k(objs, (0, 0), None, count(0)?, true)),
        "objs_in_dist" => {
            let a = id(0)?;
            RefValue::Set(ref_within(objs, (a.qx, a.qy), Some(a.id), meters(1)?))
        }
        "k_closest_to_obj" | "k_farthest_to_obj" => {
            let a = id(0)?;
            let k = count(1)?;
            RefValue::Set(ref_k(objs, (a.qx, a.qy), Some(a.id), k, name == "k_farthest_to_obj"))
        }
        "obj_distance" => {
            let a = id(0)?;
            RefValue::Dist(ref_dist((a.qx, a.qy), (0, 0)))
        }
        "find_dist" => {
            let (a, b) = (id(0)?, id(1)?);
            RefValue::Dist(ref_dist((a.qx, a.qy), (b.qx, b.qy)))
        }
        _ => return Err(()),
    })
}

/// Reference evaluation of a whole call tree.
pub fn ref_eval(expr: &CallExpr, universe: &[RefObj]) -> Result<RefValue, ()> {
    let objs: Vec<RefObj> = match expr.args.first() {
        Some(Arg::Objs) => universe.to_vec(),
        Some(Arg::Call(inner)) => match ref_eval(inner, universe)? {
            RefValue::Set(ids) => ids.iter().filter_map(|&i| find_ref(universe, i as i64)).collect(),
            RefValue::Dist(_) => return Err(()),
        },
        _ => return Err(()),
    };
    let rest: Vec<RefArg> = expr.args[1..]
        .iter()
        .map(|a| match a {
            Arg::Int(v) => Ok(RefArg::Int(*v)),
            Arg::Float(v) => Ok(RefArg::Meters(*v)),
            _ => Err(()),
        })
        .collect::<Result<_, _>>()?;
    let spec = REGISTRY.iter().find(|s| s.name == expr.name).ok_or(())?;
    if spec.params.len() != expr.args.len() {
        return Err(());
    }
    ref_apply(&expr.name, &objs, &rest, universe)
}

fn value_matches(got: &SpatialValue<'_>, want: &RefValue) -> bool {
    match (got, want) {
        (SpatialValue::Objects(set), RefValue::Set(ids)) => &set.ids() == ids,
        (SpatialValue::Object(o), RefValue::Set(ids)) => ids == &vec![o.object_id],
        (SpatialValue::Distance(d), RefValue::Dist(e)) => (d - e).abs() <= 1e-9,
        _ => false,
    }
}

fn random_params(rng: &mut ChaCha8Rng, name: &str, refs: &[RefObj]) -> Vec<RefArg> {
    let spec = REGISTRY.iter().find(|s| s.name == name).expect("registered");
    spec.params[1..]
        .iter()
        .map(|(pname, _)| match *pname {
            "id" | "id1" | "id2" => RefArg::Int(random_id(rng, refs)),
            "k" => RefArg::Int(rng.gen_range(-1..=8)),
            _ => {
                if rng.gen_bool(0.05) {
                    RefArg::Meters(-1.0)
                } else if rng.gen_bool(0.5) {
                    RefArg::Int(rng.gen_range(0..=60))
                } else {
                    RefArg::Meters(rng.gen_range(0..=240) as f64 * Q)
                }
            }
        })
        .collect()
}

fn random_id(rng: &mut ChaCha8Rng, refs: &[RefObj]) -> i64 {
    if refs.is_empty() || rng.gen_bool(0.05) {
        rng.gen_range(100..=120)
    } else {
        refs.choose(rng).expect("non-empty").id as i64
    }
}

pub struct OracleStats {
    pub scenes: usize,
    pub checks: usize,
    pub elapsed: Duration,
}

/// Every operator on `scenes` random maps, with full and random-subset
/// inputs, against the reference implementation.
pub fn check_operators(scenes: usize, seed: u64) -> Result<OracleStats, String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = 0;
    for s in 0..scenes {
        let (map, refs) = random_scene(&mut rng, &format!("oracle-{s}"));
        for spec in REGISTRY.iter() {
            for trial in 0..3 {
                let subset: Vec<usize> = if trial == 0 {
                    (0..refs.len()).collect()
                } else {
                    (0..refs.len()).filter(|_| rng.gen_bool(0.6)).collect()
                };
                let input = ObjectSet(subset.iter().map(|&i| &map.objects[i]).collect());
                let ref_input: Vec<RefObj> = subset.iter().map(|&i| refs[i]).collect();
                let params = random_params(&mut rng, spec.name, &refs);
                let mut args = vec![ArgValue::Objects(input)];
                args.extend(params.iter().map(|p| match *p {
                    RefArg::Int(v) => ArgValue::Int(v),
                    RefArg::Meters(m) => ArgValue::Float(m),
                }));
                let got = spec.op.apply(args, &map.objects);
                let want = ref_apply(spec.name, &ref_input, &params, &refs);
                let ok = match (&got, &want) {
                    (Ok(g), Ok(w)) => value_matches(g, w),
                    (Err(_), Err(())) => true,
                    _ => false,
                };
                if !ok {
                    return Err(format!(
                        "scene {s}: {}{:?} on {:?} gave {got:?}, expected {want:?}",
                        spec.name, params, ref_input
                    ));
                }
                checks += 1;
            }
        }
    }
    Ok(OracleStats {
        scenes,
        checks,
        elapsed: start.elapsed(),
    })
}

const SET_OPS: [&str; 10] = [
    "front_filter",
    "left_filter",
    "right_filter",
    "rear_filter",
    "dist_filter",
    "k_closest",
    "k_farthest",
    "objs_in_dist",
    "k_closest_to_obj",
    "k_farthest_to_obj",
];

fn random_call(rng: &mut ChaCha8Rng, depth: usize, refs: &[RefObj], top: bool) -> CallExpr {
    let name = if top {
        REGISTRY.choose(rng).expect("non-empty").name
    } else {
        *SET_OPS.choose(rng).expect("non-empty")
    };
    let first = if depth > 1 && rng.gen_bool(0.75) {
        Arg::Call(random_call(rng, depth - 1, refs, false))
    } else {
        Arg::Objs
    };
    let mut args = vec![first];
    args.extend(random_params(rng, name, refs).into_iter().map(|p| match p {
        RefArg::Int(v) => Arg::Int(v),
        RefArg::Meters(m) => Arg::Float(m),
    }));
    CallExpr::new(name, args)
}

pub struct CompositionStats {
    pub exprs: usize,
    pub max_depth: usize,
    pub errors: usize,
}

/// Random call trees of depth at most 3: evaluation must agree with the
/// reference composition and printing then parsing must give the tree back.
pub fn check_composition(count: usize, seed: u64) -> Result<CompositionStats, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = CompositionStats {
        exprs: 0,
        max_depth: 0,
        errors: 0,
    };
    for i in 0..count {
        let (map, refs) = random_scene(&mut rng, &format!("compose-{i}"));
        let depth = rng.gen_range(1..=3);
        let expr = random_call(&mut rng, depth, &refs, true);
        if expr.depth() > 3 {
            return Err(format!("generator produced depth {}: {expr}", expr.depth()));
        }
        let printed = expr.to_string();
        match parse_call(&printed) {
            Ok(back) if back == expr => {}
            other => return Err(format!("round trip of `{printed}` gave {other:?}")),
        }
        let got = eval_call(&expr, &map);
        let want = ref_eval(&expr, &refs);
        let ok = match (&got, &want) {
            (Ok(g), Ok(w)) => value_matches(g, w),
            (Err(_), Err(())) => {
                stats.errors += 1;
                true
            }
            _ => false,
        };
        if !ok {
            return Err(format!("`{printed}` gave {got:?}, expected {want:?}"));
        }
        stats.exprs += 1;
        stats.max_depth = stats.max_depth.max(expr.depth());
    }
    Ok(stats)
}

/// Synthetic bench scene built with the mock captioner and annotators.
pub fn synthetic_bench_scene(seed: u64) -> (BenchScene, LanguageEnhancedMap) {
    let params = SynthParams {
        n_objects: 4 + (seed % 7) as usize,
        ..Default::default()
    };
    let bundle = generate_synthetic_scene(seed, &params).expect("synthetic scene");
    let build = BuildOptions::default();
    let captioner = MockCaptioner::from_bundle(&bundle, &build.correspondence);
    let annotators = mock_annotators(&bundle, &build.correspondence);
    let question_llm = TemplateQuestionLlm::new(seed);
    let src = SceneSources {
        captioner: &captioner,
        annotators: &annotators,
        question_llm: &question_llm,
        build: &build,
        per_category: DEFAULT_PER_CATEGORY,
        queries_per_scene: DEFAULT_QUERIES_PER_SCENE,
        seed,
    };
    prepare_scene(&bundle, &src).expect("scene prepares")
}
