use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rewire_core::dataset::generate_synthetic_with_truth;
use rewire_core::{build_year_graph, louvain, run_pipeline, PipelineConfig, SynthConfig};

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect()
}

fn config(out: &Path) -> PipelineConfig {
    PipelineConfig {
        input_dir: None,
        synth: Some(SynthConfig {
            n_members: 300,
            n_groups: 6,
            n_years: 4,
            seed: 8,
            ..Default::default()
        }),
        years: None,
        seed: 21,
        replicates: 4,
        weighted: true,
        out_dir: out.to_path_buf(),
    }
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let mut runs = Vec::new();
    for threads in [1, 4] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| run_pipeline(&config(&out))).unwrap();
        runs.push(files(&out));
        fs::remove_dir_all(&out).unwrap();
    }
    for (name, bytes) in &runs[0] {
        assert!(runs[1].get(name) == Some(bytes), "{name} differs");
    }
    assert_eq!(runs[0].len(), 9);
    assert_eq!(runs[1].len(), 9);
}

#[test]
fn planted_clusters_are_recovered() {
    let (d, truth) = generate_synthetic_with_truth(&SynthConfig {
        n_members: 200,
        n_groups: 6,
        n_years: 2,
        n_planted_clusters: 2,
        cross_cluster_attendance_prob: 0.05,
        rewiring_rate: 0.0,
        seed: 13,
        ..Default::default()
    })
    .unwrap();
    let year = 2010;
    let (_, g) = build_year_graph(&d, year).unwrap();
    let (p, _) = louvain(&g, 1, true).unwrap();

    // cross-tabulate detected community against planted home cluster
    let mut table: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (i, m) in g.nodes().iter().enumerate() {
        let home = truth.home_cluster[&(m.clone(), year)];
        *table.entry((p.label(i), home)).or_default() += 1;
    }
    let n = g.n_nodes() as f64;
    let best_by = |key: fn(&(usize, usize)) -> usize| -> f64 {
        let mut best: BTreeMap<usize, usize> = BTreeMap::new();
        for (k, &c) in &table {
            let e = best.entry(key(k)).or_default();
            *e = (*e).max(c);
        }
        best.values().sum::<usize>() as f64 / n
    };
    let purity = best_by(|&(c, _)| c);
    let coverage = best_by(|&(_, h)| h);
    assert!(purity >= 0.95, "purity {purity}");
    assert!(coverage >= 0.95, "coverage {coverage}");
}
