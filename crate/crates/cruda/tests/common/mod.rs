#![allow(dead_code)]

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;

use cruda::golden::{self, Corpus, GoldenQuery};
use cruda::runner::{run_suite, LoadedRun, RunManifest, SuiteOptions};
use cruda_core::backend::{ScriptedBackend, ZeroClock};
use cruda_core::baseline::{MultiApi, SingleApi};
use cruda_core::dataset::QueryRecord;
use cruda_core::pipeline::{Pipeline, Thor};
use cruda_core::schema::{builtin_registry, Registry};

pub fn corpus() -> (Registry, Corpus) {
    let reg = builtin_registry();
    let c = golden::build(&reg).expect("corpus builds");
    (reg, c)
}

pub fn opts(repeats: u32) -> SuiteOptions {
    SuiteOptions { repeats, parallelism: 4, sim_latency_s: 0.1, realtime: false }
}

pub fn fixtures(c: &Corpus) -> BTreeMap<String, cruda_core::sim::Fixture> {
    BTreeMap::from([(golden::FIXTURE_FILE.to_string(), c.fixture.clone())])
}

/// Runs `kind` ("thor", "single", "multi") over `qs` with golden scripts.
pub fn golden_run(kind: &str, qs: &[GoldenQuery], repeats: u32, reg: &Registry, c: &Corpus) -> LoadedRun {
    let lines = match kind {
        "thor" => golden::planner_script(qs),
        "single" => golden::single_script(reg, qs),
        _ => golden::decompose_script(reg, qs),
    };
    let backend = ScriptedBackend::from_lines("scripted", lines).expect("script loads");
    let pipeline: Box<dyn Pipeline> = match kind {
        "thor" => Box::new(Thor::new(backend, reg.clone())),
        "single" => Box::new(SingleApi::new(backend, reg.clone())),
        _ => Box::new(MultiApi::new(backend, reg.clone())),
    };
    let records: Vec<QueryRecord> = qs.iter().map(|q| q.record.clone()).collect();
    let run = run_suite(pipeline.as_ref(), &records, &fixtures(c), reg, &opts(repeats), &ZeroClock).expect("suite runs");
    let manifest = RunManifest::new(&run, &records, "d", "c");
    LoadedRun { dir: PathBuf::from(kind), manifest, results: run.results }
}

/// Serves `router` on an ephemeral port from a background thread.
pub fn spawn(router: axum::Router) -> SocketAddr {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, router).await.unwrap();
        });
    });
    rx.recv().unwrap()
}

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_cruda"))
}

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}
