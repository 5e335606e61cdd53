//! Acceptance suite. One line per criterion: PASS or FAIL, elapsed time
//! against the budget, and a detail string. Exits non-zero on any FAIL.

mod common;

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_4, PI};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use common::*;
use scene_synth::agents::Embedding;
use scene_synth::document::{deserialize_layout, serialize_layout, DocumentError};
use scene_synth::edit::{apply_edit, edit_and_refine, EditOp};
use scene_synth::eval::{collision_rate, oob_rate};
use scene_synth::geometry::{oob_excess, overlap_area, Region, Vec2};
use scene_synth::grounding::zone_constraints;
use scene_synth::memory::{
    retrieve_with, tokenize, ParsedSceneTexts, PriorMemory, RetrievalMode, SceneEntry, BM25_B,
    BM25_K1,
};
use scene_synth::pipeline::{generate, mock_memory, Clients, PipelineConfig};
use scene_synth::refine::{
    geometric_penalty, penalty_from_counts, refine_loop, refine_loop_with, Diagnoser,
    PenaltyWeights, RefineConfig, EPS_OOB, EPS_PEN, THETA_P,
};
use scene_synth::scene::{
    AssetCatalog, FunctionalityZone, Layout, Role, RoomBoundary, ShortDescription,
};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

struct Suite {
    failed: usize,
    total: usize,
}

impl Suite {
    fn run(&mut self, name: &str, budget: Duration, f: impl FnOnce() -> Check) {
        let t0 = Instant::now();
        let out = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let dt = t0.elapsed();
        let (ok, detail) = match out {
            Ok(d) if dt <= budget => (true, d),
            Ok(d) => (false, format!("{d}; over budget")),
            Err(d) => (false, d),
        };
        self.total += 1;
        if !ok {
            self.failed += 1;
        }
        println!(
            "{} {name} ({:.2}s/{}s) {detail}",
            if ok { "PASS" } else { "FAIL" },
            dt.as_secs_f64(),
            budget.as_secs()
        );
    }
}

fn penalty_exactness() -> Check {
    let w = PenaltyWeights::default();
    let mut r = rng(1);
    for _ in 0..1000 {
        let (a, b, c) = (
            r.random_range(0..200usize),
            r.random_range(0..200usize),
            r.random_range(0..200usize),
        );
        let want = 0.3 * a as f64 + 0.2 * b as f64 + 0.5 * c as f64;
        let got = penalty_from_counts(a, b, c, &w);
        ensure((got - want).abs() <= 1e-9, || {
            format!("({a},{b},{c}): {got} vs {want}")
        })?;
    }
    let p = penalty_from_counts(0, 0, 7, &w);
    ensure(p == 3.5, || format!("(0,0,7) gave {p}"))?;
    ensure(w.triggers(p), || "(0,0,7) does not trigger".into())?;
    Ok("1000 triples within 1e-9; (0,0,7) = 3.5 triggers".into())
}

fn geometry_oracle() -> Check {
    let room = room();
    let a = fp(0.0, 0.0, 0.0, 1.0, 1.0);
    let b = fp(0.0, 0.0, FRAC_PI_4, 1.0, 1.0);
    let want = 8.0 * (2f64.sqrt() - 1.0);
    let got = overlap_area(&a, &b);
    ensure((got - want).abs() <= 1e-6, || {
        format!("45 degree case {got}")
    })?;
    let mc = mc_overlap(&a, &b, 1_000_000, 99);
    ensure((mc - want).abs() / want <= 0.01, || {
        format!("45 degree MC {mc}")
    })?;

    let cases: Vec<u64> = (0..200).collect();
    let results: Vec<Result<(f64, f64), String>> = cases
        .par_iter()
        .map(|&i| {
            let mut r = rng(1000 + i);
            // Pairs close enough to overlap, one of them also near a wall.
            let fa = random_footprint(&mut r, (-0.4, -0.4), (4.4, 3.4));
            let off = (r.random_range(-0.8..0.8), r.random_range(-0.8..0.8));
            let fb = fp(
                fa.center.x + off.0,
                fa.center.y + off.1,
                r.random_range(-PI..PI),
                r.random_range(0.1..1.0),
                r.random_range(0.1..1.0),
            );
            let lib = overlap_area(&fa, &fb);
            let exact = exact_overlap(&fa, &fb);
            if (lib - exact).abs() > 1e-6 {
                return Err(format!("case {i}: overlap {lib} vs exact {exact}"));
            }
            let mc = mc_overlap(&fa, &fb, 1_000_000, i);
            let rel_ov = if exact > 0.0 {
                (lib - mc).abs() / exact
            } else {
                (lib - mc).abs()
            };
            if rel_ov > 0.01 {
                return Err(format!("case {i}: overlap {lib} vs MC {mc}"));
            }
            let lib_oob = oob_excess(&fa, &room);
            let exact_o = exact_oob(&fa, &room);
            if (lib_oob - exact_o).abs() > 1e-6 {
                return Err(format!("case {i}: oob {lib_oob} vs exact {exact_o}"));
            }
            let mc_o = mc_oob(&fa, &room, 1_000_000, i + 7);
            let rel_oob = if exact_o > 1e-12 {
                (lib_oob - mc_o).abs() / exact_o
            } else {
                (lib_oob - mc_o).abs()
            };
            if rel_oob > 0.01 {
                return Err(format!("case {i}: oob {lib_oob} vs MC {mc_o}"));
            }
            Ok((rel_ov, rel_oob))
        })
        .collect();
    let mut worst = (0.0f64, 0.0f64);
    let mut with_oob = 0;
    for (i, res) in results.into_iter().enumerate() {
        let (o, b) = res?;
        worst = (worst.0.max(o), worst.1.max(b));
        let mut r = rng(1000 + i as u64);
        let fa = random_footprint(&mut r, (-0.4, -0.4), (4.4, 3.4));
        if oob_excess(&fa, &room) > 0.0 {
            with_oob += 1;
        }
    }
    Ok(format!(
        "200 cases ({with_oob} leave the room); worst MC rel err overlap {:.4}% oob {:.4}%; exact within 1e-6",
        100.0 * worst.0,
        100.0 * worst.1
    ))
}

const VOCAB: &[&str] = &[
    "bed", "sofa", "lamp", "table", "chair", "desk", "rug", "tv", "shelf", "plant", "window",
    "door", "left", "right", "near", "wall", "large", "small", "wooden", "white",
];

fn random_texts(r: &mut rand_chacha::ChaCha8Rng) -> ParsedSceneTexts {
    let words = |r: &mut rand_chacha::ChaCha8Rng, n: usize| -> String {
        (0..n)
            .map(|_| VOCAB[r.random_range(0..VOCAB.len())])
            .collect::<Vec<_>>()
            .join(" ")
    };
    let n = r.random_range(1..12);
    ParsedSceneTexts {
        summary: words(r, n),
        relations: (0..r.random_range(0..4))
            .map(|_| {
                let n = r.random_range(1..5);
                words(r, n)
            })
            .collect(),
        scales: (0..r.random_range(0..3))
            .map(|_| {
                let n = r.random_range(1..4);
                words(r, n)
            })
            .collect(),
    }
}

fn random_unit(r: &mut rand_chacha::ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| r.random_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.1 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn random_memory(r: &mut rand_chacha::ChaCha8Rng, n: usize, dim: usize) -> PriorMemory {
    let mut entries: Vec<SceneEntry> = Vec::with_capacity(n);
    for i in 0..n {
        // About one entry in five repeats an earlier one, giving exact ties.
        let (texts, emb) = if i > 0 && r.random_bool(0.2) {
            let j = r.random_range(0..i);
            (
                entries[j].texts.clone(),
                entries[j].embedding.as_slice().to_vec(),
            )
        } else {
            (random_texts(r), random_unit(r, dim))
        };
        entries.push(SceneEntry {
            id: format!("e{i}"),
            texts,
            embedding: Embedding::from_unit(emb),
        });
    }
    PriorMemory::new(entries).unwrap()
}

fn bm25_reference_check() -> Check {
    let docs = vec![
        vec!["sofa".to_string(), "x".into()],
        vec!["lamp".to_string(), "y".into()],
    ];
    let entries: Vec<SceneEntry> = docs
        .iter()
        .enumerate()
        .map(|(i, d)| SceneEntry {
            id: format!("w{i}"),
            texts: ParsedSceneTexts {
                summary: d.join(" "),
                relations: vec![],
                scales: vec![],
            },
            embedding: Embedding::from_unit(vec![1.0]),
        })
        .collect();
    let mem = PriorMemory::new(entries).unwrap();
    let s = mem.bm25_scores(&["sofa".to_string()])[0];
    ensure((s - 2f64.ln()).abs() <= 1e-9, || {
        format!("worked example {s}")
    })?;

    let mut r = rng(3);
    let mut compared = 0;
    for _ in 0..50 {
        let n = r.random_range(1..80);
        let mem = random_memory(&mut r, n, 4);
        let docs: Vec<Vec<String>> = mem
            .entries
            .iter()
            .map(|e| {
                let mut t = tokenize(&e.texts.summary);
                for x in e.texts.relations.iter().chain(&e.texts.scales) {
                    t.extend(tokenize(x));
                }
                t
            })
            .collect();
        let q: Vec<String> = (0..r.random_range(1..6))
            .map(|_| VOCAB[r.random_range(0..VOCAB.len())].to_string())
            .collect();
        let want = bm25_reference(&docs, &q, 1.2, 0.75);
        let got = mem.bm25_scores(&q);
        ensure(BM25_K1 == 1.2 && BM25_B == 0.75, || "constants".into())?;
        for (i, (g, w)) in got.iter().zip(&want).enumerate() {
            ensure((g - w).abs() <= 1e-9, || format!("entry {i}: {g} vs {w}"))?;
            compared += 1;
        }
    }
    Ok(format!(
        "worked example = ln 2; {compared} scores over 50 corpora within 1e-9"
    ))
}

fn retrieval_correctness() -> Check {
    let mut r = rng(4);
    let mut generalized = 0;
    for m in 0..100 {
        let n = r.random_range(1..=500);
        let dim = r.random_range(2..10);
        let mem = random_memory(&mut r, n, dim);
        let q = Embedding::from_unit(random_unit(&mut r, dim));
        let k = r.random_range(1..8);
        let words: Vec<&str> = (0..r.random_range(1..5))
            .map(|_| VOCAB[r.random_range(0..VOCAB.len())])
            .collect();
        let d = ShortDescription::new(words.join(" ")).unwrap();
        let cos: Vec<f64> = mem
            .entries
            .iter()
            .map(|e| {
                let mut s = 0.0;
                for (a, b) in e.embedding.as_slice().iter().zip(q.as_slice()) {
                    s += a * b;
                }
                s
            })
            .collect();
        let max = cos.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let theta = r.random_range(-0.5..1.0);
        for th in [theta, max, f64::from_bits(max.to_bits() - 1).min(max), 0.35] {
            let pkg = retrieve_with(&d, &q, &mem, k, th, || Ok(vec![])).unwrap();
            let fallback = max <= th;
            ensure((pkg.mode == RetrievalMode::Generalized) == fallback, || {
                format!("memory {m}: max {max} theta {th} mode {:?}", pkg.mode)
            })?;
            let scores = if fallback {
                generalized += 1;
                let docs: Vec<Vec<String>> = mem.entries.iter().map(SceneEntry::tokens).collect();
                bm25_reference(&docs, &tokenize(d.as_str()), 1.2, 0.75)
            } else {
                cos.clone()
            };
            let want = brute_top_k(&scores, k);
            let got: Vec<usize> = pkg
                .retrieved
                .iter()
                .map(|x| x.entry.id[1..].parse::<usize>().unwrap())
                .collect();
            ensure(got == want, || {
                format!("memory {m} theta {th}: {got:?} vs {want:?}")
            })?;
        }
    }
    // Equality boundary with exactly representable cosines.
    let mem = PriorMemory::new(vec![SceneEntry {
        id: "e".into(),
        texts: ParsedSceneTexts {
            summary: "sofa".into(),
            relations: vec![],
            scales: vec![],
        },
        embedding: Embedding::from_unit(vec![0.6, 0.8]),
    }])
    .unwrap();
    let q = Embedding::from_unit(vec![1.0, 0.0]);
    let d = ShortDescription::new("sofa").unwrap();
    let at = retrieve_with(&d, &q, &mem, 1, 0.6, || Ok(vec![])).unwrap();
    let below = retrieve_with(
        &d,
        &q,
        &mem,
        1,
        f64::from_bits(0.6f64.to_bits() - 1),
        || Ok(vec![]),
    )
    .unwrap();
    ensure(at.mode == RetrievalMode::Generalized, || {
        "cos == theta must fall back".into()
    })?;
    ensure(below.mode == RetrievalMode::Semantic, || {
        "cos > theta must stay semantic".into()
    })?;
    Ok(format!("100 memories x 4 thresholds match brute force ({generalized} generalized); equality boundary exact"))
}

fn constraint_invariant() -> Check {
    let mut r = rng(5);
    let mut clipped = 0;
    for i in 0..500 {
        let room =
            RoomBoundary::new(r.random_range(1.0..10.0), r.random_range(1.0..10.0), 2.8).unwrap();
        let mut xs = [
            r.random_range(0.0..room.width),
            r.random_range(0.0..room.width),
        ];
        let mut ys = [
            r.random_range(0.0..room.depth),
            r.random_range(0.0..room.depth),
        ];
        xs.sort_by(f64::total_cmp);
        ys.sort_by(f64::total_cmp);
        if r.random_bool(0.3) {
            xs[0] = 0.0;
        }
        if r.random_bool(0.3) {
            ys[1] = room.depth;
        }
        if xs[1] - xs[0] < 1e-3 || ys[1] - ys[0] < 1e-3 {
            continue;
        }
        let zone = FunctionalityZone {
            id: format!("z{i}"),
            region: Region::new(xs[0], ys[0], xs[1], ys[1]).unwrap(),
            functionality: "use".into(),
        };
        let int = r.random_range(1e-6..2.0);
        let buf = if r.random_bool(0.1) {
            0.0
        } else {
            r.random_range(0.0..int)
        };
        let c = zone_constraints(&zone, &room, buf, int).unwrap();
        let (b, n) = (&c.buffer, &c.interactive);
        ensure(
            n.min_x <= b.min_x && n.min_y <= b.min_y && n.max_x >= b.max_x && n.max_y >= b.max_y,
            || format!("zone {i}: {b:?} not within {n:?}"),
        )?;
        ensure(
            n.min_x >= 0.0 && n.min_y >= 0.0 && n.max_x <= room.width && n.max_y <= room.depth,
            || format!("zone {i}: interactive leaves the room"),
        )?;
        if n.min_x == 0.0 || n.min_y == 0.0 || n.max_x == room.width || n.max_y == room.depth {
            clipped += 1;
        }
        ensure(zone_constraints(&zone, &room, int, int).is_err(), || {
            "buf == int accepted".into()
        })?;
    }
    Ok(format!(
        "buffer within interactive on all zones ({clipped} wall-clipped)"
    ))
}

fn refine_run(theta_p: f64) -> Result<(usize, usize, f64), String> {
    let results: Vec<Result<(bool, usize, f64), String>> = (0..100u64)
        .into_par_iter()
        .map(|seed| {
            let g0 = injected_layout(seed);
            let w = PenaltyWeights {
                theta_p,
                ..PenaltyWeights::default()
            };
            let config = RefineConfig {
                weights: w,
                render_resolution: None,
                ..RefineConfig::default()
            };
            let (_, trace) = refine_loop_with(&g0, &config, Diagnoser::Geometric, seed)
                .map_err(|e| e.to_string())?;
            let ps = trace.penalties();
            let steps = ps.len() - 1;
            let bad = ps.windows(2).filter(|w| w[1] > w[0] + 1e-12).count();
            let reached = ps.iter().any(|&p| p < theta_p) && steps <= 5;
            Ok((reached, bad, ps[0]))
        })
        .collect();
    let mut reached = 0;
    let mut increases = 0;
    let mut p0 = 0.0;
    for res in results {
        let (ok, bad, first) = res?;
        reached += ok as usize;
        increases += bad;
        p0 += first;
    }
    Ok((reached, increases, p0 / 100.0))
}

fn refinement_convergence() -> Check {
    // Injection sanity: exactly 3 penetrating pairs and 2 OOB objects.
    for seed in 0..100 {
        let g = injected_layout(seed);
        let rep = scene_synth::refine::diagnose_geometric(&g, 0.1);
        ensure(
            rep.penetration_pairs.len() == 3 && rep.oob_objects.len() == 2,
            || format!("seed {seed}: injected {:?}", rep.counts()),
        )?;
    }
    let (reached, increases, p0) = refine_run(THETA_P)?;
    ensure(reached >= 95, || format!("{reached}/100 reached p < 3.5"))?;
    ensure(increases == 0, || format!("{increases} increasing steps"))?;
    Ok(format!(
        "{reached}/100 seeds reach p < 3.5; 0 increasing steps; mean initial p {p0:.2}"
    ))
}

fn refinement_strict() -> Check {
    let (reached, increases, _) = refine_run(0.1)?;
    ensure(increases == 0, || format!("{increases} increasing steps"))?;
    ensure(reached >= 95, || format!("{reached}/100 reached p < 0.1"))?;
    Ok(format!(
        "{reached}/100 seeds reach p < 0.1 within 5 steps; 0 increasing steps"
    ))
}

fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn end_to_end() -> Check {
    let tmp = tempfile::tempdir().unwrap();
    let mut trees = Vec::new();
    for run in ["a", "b"] {
        let out = tmp.path().join(run);
        let st = Command::new(env!("CARGO_BIN_EXE_scene-synth"))
            .args([
                "generate",
                "a cozy bedroom",
                "--mode",
                "mock",
                "--seed",
                "7",
                "--out",
            ])
            .arg(&out)
            .output()
            .unwrap();
        ensure(st.status.success(), || {
            format!(
                "exit {:?}: {}",
                st.status,
                String::from_utf8_lossy(&st.stderr)
            )
        })?;
        trees.push(read_tree(&out));
    }
    ensure(trees[0] == trees[1], || "reruns differ".into())?;
    let doc = String::from_utf8(trees[0]["layout.scene"].clone()).unwrap();
    let l = deserialize_layout(&doc).map_err(|e| e.to_string())?;
    ensure(
        l.zones.len() >= 2 && l.dominants.len() >= 2 && !l.accessories.is_empty(),
        || {
            format!(
                "{} zones, {} dominants, {} accessories",
                l.zones.len(),
                l.dominants.len(),
                l.accessories.len()
            )
        },
    )?;
    let (c, o) = (collision_rate(&l), oob_rate(&l));
    ensure(c == 0.0 && o == 0.0, || format!("Collision {c}% OOB {o}%"))?;
    l.hierarchy.check_well_formed().map_err(|e| e.to_string())?;
    ensure(
        trees[0].keys().any(|k| k.ends_with(".ppm")) && trees[0].contains_key("trace.log"),
        || "missing render or trace".into(),
    )?;
    Ok(format!(
        "{} zones, {} dominants, {} accessories, Collision 0%, OOB 0%, {} files byte-identical",
        l.zones.len(),
        l.dominants.len(),
        l.accessories.len(),
        trees[0].len()
    ))
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Class {
    Parse,
    Validation,
}

fn malformed_corpus() -> Vec<(&'static str, String, Class)> {
    let good = serialize_layout(&random_layout_with_objects());
    let lines: Vec<&str> = good.lines().collect();
    let header = "format name=\"layout\" version=1";
    let room = "room width=4 depth=3 height=2.8";
    let zone = "zone id=\"z\" functionality=\"sleep\" min_x=0 min_y=0 max_x=2 max_y=3";
    let dom = "object id=\"d\" category=\"bed\" role=dominant zone=\"z\" parent=- x=1 y=1 yaw=0 hw=0.5 hd=0.5 height=1";
    let acc = "object id=\"a\" category=\"lamp\" role=accessory zone=\"z\" parent=\"d\" x=1 y=1 yaw=0 hw=0.1 hd=0.1 height=1";
    let doc = |body: &[&str]| {
        let mut s = String::new();
        for l in body {
            s.push_str(l);
            s.push('\n');
        }
        s
    };
    let replace = |from: &str, to: &str| {
        assert!(
            dom.contains(from) || acc.contains(from) || zone.contains(from) || room.contains(from)
        );
        doc(&[
            header,
            &room.replace(from, to),
            &zone.replace(from, to),
            &dom.replace(from, to),
            &acc.replace(from, to),
        ])
    };
    use Class::*;
    let first_object = lines.iter().position(|l| l.starts_with("object")).unwrap();
    let mut truncated: Vec<&str> = lines.clone();
    truncated[first_object] = "object id=\"broken";
    vec![
        ("empty document", String::new(), Parse),
        ("comments only", "# nothing\n\n".into(), Parse),
        ("missing header", doc(&[room, zone, dom]), Parse),
        (
            "wrong format name",
            doc(&["format name=\"prior_memory\" version=1", room]),
            Parse,
        ),
        (
            "wrong version",
            doc(&["format name=\"layout\" version=2", room]),
            Parse,
        ),
        ("unterminated string", truncated.join("\n"), Parse),
        (
            "bad escape",
            doc(&[
                header,
                room,
                "zone id=\"z\\q\" functionality=\"s\" min_x=0 min_y=0 max_x=1 max_y=1",
            ]),
            Parse,
        ),
        (
            "missing equals",
            doc(&[header, "room width 4 depth=3 height=2.8"]),
            Parse,
        ),
        (
            "unknown record",
            doc(&[header, room, "window id=\"w\""]),
            Parse,
        ),
        ("second room", doc(&[header, room, room]), Parse),
        ("missing room", doc(&[header, zone]), Parse),
        ("non-numeric value", replace("x=1 ", "x=one "), Parse),
        (
            "unknown field",
            doc(&[header, "room width=4 depth=3 height=2.8 color=red"]),
            Parse,
        ),
        (
            "missing field",
            doc(&[header, "room width=4 depth=3"]),
            Parse,
        ),
        ("bad role", replace("role=dominant", "role=primary"), Parse),
        (
            "yaw out of range",
            replace("yaw=0 hw=0.5", "yaw=3.5 hw=0.5"),
            Parse,
        ),
        (
            "bad relation kind",
            doc(&[
                header,
                room,
                zone,
                dom,
                "relation subject=\"d\" kind=under object=\"room\" granularity=dominant",
            ]),
            Parse,
        ),
        (
            "accessory without parent",
            replace("parent=\"d\"", "parent=-"),
            Validation,
        ),
        (
            "dominant without zone",
            doc(&[header, room, zone, &dom.replace("zone=\"z\"", "zone=-")]),
            Validation,
        ),
        (
            "zone outside room",
            doc(&[header, room, &zone.replace("max_x=2", "max_x=5")]),
            Validation,
        ),
        (
            "duplicate id",
            doc(&[header, room, zone, dom, dom]),
            Validation,
        ),
        (
            "dangling relation",
            doc(&[
                header,
                room,
                zone,
                dom,
                "relation subject=\"d\" kind=near object=\"ghost\" granularity=dominant",
            ]),
            Validation,
        ),
        (
            "dangling zone",
            doc(&[
                header,
                room,
                zone,
                &dom.replace("zone=\"z\"", "zone=\"elsewhere\""),
            ]),
            Validation,
        ),
        (
            "negative room",
            doc(&[header, "room width=-4 depth=3 height=2.8"]),
            Validation,
        ),
        (
            "negative half extent",
            replace("hw=0.5", "hw=-0.5"),
            Validation,
        ),
        (
            "empty functionality",
            doc(&[header, room, &zone.replace("sleep", "")]),
            Validation,
        ),
        (
            "hierarchy mismatch",
            doc(&[
                header,
                room,
                zone,
                dom,
                "node id=\"room\" level=root parent=-",
                "node id=\"z\" level=zone parent=\"room\"",
            ]),
            Validation,
        ),
        (
            "dominant with parent",
            doc(&[
                header,
                room,
                zone,
                dom,
                &dom.replace("\"d\"", "\"e\"")
                    .replace("parent=-", "parent=\"d\""),
            ]),
            Validation,
        ),
    ]
}

fn random_layout_with_objects() -> Layout {
    (0..)
        .map(|s| random_layout(s, 5, 5))
        .find(|l| !l.dominants.is_empty())
        .unwrap()
}

fn serialization() -> Check {
    let mut bytes = 0;
    for seed in 0..1000 {
        let l = random_layout(seed, 12, 8);
        let doc = serialize_layout(&l);
        let back = deserialize_layout(&doc).map_err(|e| format!("seed {seed}: {e}\n{doc}"))?;
        ensure(back == l, || {
            format!("seed {seed}: round trip changed the layout")
        })?;
        ensure(serialize_layout(&back) == doc, || {
            format!("seed {seed}: reserialization differs")
        })?;
        bytes += doc.len();
    }
    let corpus = malformed_corpus();
    for (name, doc, class) in &corpus {
        let got = match deserialize_layout(doc) {
            Ok(_) => return Err(format!("{name}: accepted")),
            Err(DocumentError::Parse(_)) => Class::Parse,
            Err(DocumentError::Validation(_)) => Class::Validation,
        };
        ensure(got == *class, || {
            format!("{name}: expected {class:?}, got {got:?}")
        })?;
    }
    Ok(format!(
        "1000 layouts round-trip ({bytes} bytes); {} malformed documents classified",
        corpus.len()
    ))
}

fn metrics_recount() -> Check {
    let mut nonzero = (0, 0);
    for seed in 0..200 {
        let l = random_metric_layout(seed);
        let (c, o) = (collision_rate(&l), oob_rate(&l));
        let (cw, ow) = (recount_collision(&l, EPS_PEN), recount_oob(&l, EPS_OOB));
        ensure(c == cw, || format!("seed {seed}: collision {c} vs {cw}"))?;
        ensure(o == ow, || format!("seed {seed}: oob {o} vs {ow}"))?;
        nonzero.0 += (c > 0.0) as usize;
        nonzero.1 += (o > 0.0) as usize;
    }
    Ok(format!(
        "200 layouts exact ({} with collisions, {} with OOB)",
        nonzero.0, nonzero.1
    ))
}

fn fixture(desc: &str) -> Layout {
    let clients = Clients::mock();
    let memory = mock_memory(&clients.embedder).unwrap();
    let d = ShortDescription::new(desc).unwrap();
    generate(&d, &memory, &PipelineConfig::default(), &clients, 7)
        .unwrap()
        .layout
}

fn check_invariants(l: &Layout, what: &str) -> Result<(), String> {
    l.validate().map_err(|e| format!("{what}: {e}"))?;
    l.hierarchy
        .check_well_formed()
        .map_err(|e| format!("{what}: {e}"))?;
    let back = deserialize_layout(&serialize_layout(l)).map_err(|e| format!("{what}: {e}"))?;
    ensure(&back == l, || format!("{what}: round trip"))
}

fn editing() -> Check {
    let catalog = AssetCatalog::default();
    let config = RefineConfig {
        render_resolution: None,
        ..RefineConfig::default()
    };
    let mut edits = 0;
    let mut r = rng(10);
    for desc in [
        "a cozy bedroom",
        "a bright living room",
        "a small home office",
    ] {
        let l = fixture(desc);
        let mut dominants: Vec<_> = l.dominants.iter().collect();
        dominants.shuffle(&mut r);
        let target = dominants[0];
        let zone = l.zone(target.zone_id.as_deref().unwrap()).unwrap();
        let c = zone.region.center();
        let mut ops = vec![
            EditOp::Delete {
                id: target.id.clone(),
            },
            EditOp::Add {
                category: "plant".into(),
                x: c.x,
                y: c.y,
                yaw: 0.0,
                parent: None,
                on_top: None,
            },
            EditOp::Add {
                category: "lamp".into(),
                x: target.footprint.center.x,
                y: target.footprint.center.y,
                yaw: 0.0,
                parent: Some(target.id.clone()),
                on_top: Some(target.id.clone()),
            },
            EditOp::Move {
                id: target.id.clone(),
                x: l.room.width - target.footprint.center.x,
                y: l.room.depth - target.footprint.center.y,
            },
        ];
        if let Some(acc) = l.accessories.first() {
            ops.push(EditOp::Delete { id: acc.id.clone() });
            ops.push(EditOp::Move {
                id: acc.id.clone(),
                x: acc.footprint.center.x + 0.3,
                y: acc.footprint.center.y,
            });
        }
        for op in ops {
            let what = format!("{desc}: {op:?}");
            let edited = apply_edit(&l, &op, &catalog).map_err(|e| format!("{what}: {e}"))?;
            check_invariants(&edited.layout, &what)?;
            if let EditOp::Delete { id } = &op {
                ensure(edited.layout.object(id).is_none(), || {
                    format!("{what}: still present")
                })?;
                ensure(
                    edited
                        .layout
                        .accessories
                        .iter()
                        .all(|a| a.parent_id.as_deref() != Some(id)),
                    || format!("{what}: orphan"),
                )?;
            }
            if let EditOp::Move { id, x, y } = &op {
                ensure(
                    edited.layout.object(id).unwrap().footprint.center == Vec2::new(*x, *y),
                    || format!("{what}: not moved"),
                )?;
            }
            if let EditOp::Add { parent, .. } = &op {
                let o = edited.layout.object(&edited.affected[0]).unwrap();
                let role = if parent.is_some() {
                    Role::Accessory
                } else {
                    Role::Dominant
                };
                ensure(o.role == role, || format!("{what}: role"))?;
            }
            let out = edit_and_refine(&l, &op, &catalog, &config, Diagnoser::Geometric, 3)
                .map_err(|e| format!("{what}: {e}"))?;
            check_invariants(&out.layout, &what)?;
            let p = geometric_penalty(&out.layout, config.clr_required, &config.weights);
            ensure(p < THETA_P, || format!("{what}: final p {p}"))?;
            edits += 1;
        }
    }
    // The loop entry point with explicit weights agrees with the config form.
    let l = fixture("a cozy bedroom");
    let (a, _) = refine_loop(&l, &PenaltyWeights::default(), 5, Diagnoser::Geometric, 1).unwrap();
    ensure(
        geometric_penalty(&a, 0.1, &PenaltyWeights::default()) < THETA_P,
        || "refine_loop".into(),
    )?;
    Ok(format!(
        "{edits} edits on 3 fixtures keep invariants and end with p < {THETA_P}"
    ))
}

fn main() {
    let mut s = Suite {
        failed: 0,
        total: 0,
    };
    let secs = Duration::from_secs;
    s.run("penalty exactness", secs(1), penalty_exactness);
    s.run("geometry oracle equivalence", secs(60), geometry_oracle);
    s.run("BM25 reference equivalence", secs(5), bm25_reference_check);
    s.run("retrieval correctness", secs(10), retrieval_correctness);
    s.run("constraint invariant", secs(2), constraint_invariant);
    s.run("refinement convergence", secs(30), refinement_convergence);
    s.run(
        "refinement convergence, strict threshold (supplementary)",
        secs(30),
        refinement_strict,
    );
    s.run("end-to-end mock pipeline", secs(10), end_to_end);
    s.run("serialization", secs(10), serialization);
    s.run("metrics recount", secs(10), metrics_recount);
    s.run("editing", secs(10), editing);
    println!("{}/{} criteria passed", s.total - s.failed, s.total);
    if s.failed > 0 {
        std::process::exit(1);
    }
}
