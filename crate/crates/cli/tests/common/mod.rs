#![allow(dead_code)]

use std::ffi::OsStr;
use std::path::{Path, PathBuf};
use std::process::Command;

use semspace_core::catalog::{write_embeddings, Catalog, EmbeddingSet, Item};
use semspace_core::contrastive::TripletSet;
use semspace_core::synthetic::{triplet_fixture, PARAPHRASE_ID_OFFSET};

pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Run {
    #[track_caller]
    pub fn ok(self) -> Self {
        assert_eq!(self.code, 0, "stderr: {}", self.stderr);
        self
    }
}

pub fn semspace<I, S>(args: I) -> Run
where
    I: IntoIterator<Item = S>,
    S: AsRef<OsStr>,
{
    let out = Command::new(env!("CARGO_BIN_EXE_semspace"))
        .args(args)
        .output()
        .expect("binary runs");
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

/// Temporary directory holding fixture files.
pub struct Dir(pub tempfile::TempDir);

impl Dir {
    pub fn new() -> Self {
        Dir(tempfile::tempdir().unwrap())
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.0.path().join(name)
    }

    pub fn s(&self, name: &str) -> String {
        self.path(name).display().to_string()
    }

    pub fn catalog(&self, name: &str, catalog: &Catalog) -> String {
        catalog.save(self.path(name)).unwrap();
        self.s(name)
    }

    pub fn embeddings(&self, name: &str, set: &EmbeddingSet<f64>) -> String {
        write_embeddings(self.path(name), set).unwrap();
        self.s(name)
    }

    pub fn text(&self, name: &str, text: &str) -> String {
        std::fs::write(self.path(name), text).unwrap();
        self.s(name)
    }

    pub fn read(&self, name: &str) -> Vec<u8> {
        std::fs::read(self.path(name)).unwrap()
    }
}

pub fn catalog_for(ids: &[u64]) -> Catalog {
    Catalog::from_items(ids.iter().map(|&id| Item::new(id, format!("item {id}")))).unwrap()
}

/// Triplet fixture split into the files `train` expects.
pub struct TripletFiles {
    pub catalog: String,
    pub embeddings: String,
    pub paraphrases: String,
    pub triplets: String,
    pub full: EmbeddingSet<f64>,
    pub set: TripletSet,
    pub catalog_data: Catalog,
}

pub fn triplet_files(dir: &Dir, n: usize, dim: usize, signal: usize, nuisance: f64, seed: u64) -> TripletFiles {
    let f = triplet_fixture(n, dim, signal, nuisance, seed);
    let (items, para): (Vec<u64>, Vec<u64>) = f.embeddings.ids().iter().partition(|&&id| id < PARAPHRASE_ID_OFFSET);
    f.triplets.save(dir.path("triplets.jsonl")).unwrap();
    TripletFiles {
        catalog: dir.catalog("catalog.jsonl", &f.catalog),
        embeddings: dir.embeddings("items.cemb", &f.embeddings.subset(&items)),
        paraphrases: dir.embeddings("para.cemb", &f.embeddings.subset(&para)),
        triplets: dir.s("triplets.jsonl"),
        full: f.embeddings,
        set: f.triplets,
        catalog_data: f.catalog,
    }
}

pub fn history_column(path: &Path, column: &str) -> Vec<f64> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let idx = r.headers().unwrap().iter().position(|h| h == column).unwrap();
    r.records().map(|rec| rec.unwrap()[idx].parse().unwrap()).collect()
}
