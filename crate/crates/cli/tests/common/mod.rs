#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const NEUTRAL: [&str; 14] = [
    "the", "report", "said", "council", "weather", "market", "today", "city", "people", "plans", "budget", "school",
    "road", "meeting",
];

const PHRASES: [(&str, &str); 4] = [
    ("corrupt elite", "Loaded_Language"),
    ("radical mob", "Name_Calling,Labeling"),
    ("total disaster", "Exaggeration,Minimisation"),
    ("they will destroy us", "Appeal_to_fear-prejudice"),
];

pub struct Corpus {
    pub articles: PathBuf,
    pub si: PathBuf,
    pub tc: PathBuf,
}

/// Writes `n` small articles with planted phrases plus matching SI and TC
/// label files.
pub fn write_corpus(dir: &Path, n: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let articles = dir.join("articles");
    std::fs::create_dir_all(&articles).unwrap();
    let mut si = String::new();
    let mut tc = String::new();
    for a in 0..n {
        let id = 100 + a;
        let mut text = format!("Headline number {id} about the city\n\n");
        for _ in 0..rng.gen_range(3..7) {
            let len = rng.gen_range(4..10);
            let plant = rng.gen_bool(0.5).then(|| rng.gen_range(0..len));
            for w in 0..len {
                if w > 0 {
                    text.push(' ');
                }
                if plant == Some(w) {
                    let (phrase, technique) = PHRASES[rng.gen_range(0..PHRASES.len())];
                    let begin = text.chars().count();
                    text.push_str(phrase);
                    let end = text.chars().count();
                    si.push_str(&format!("{id}\t{begin}\t{end}\n"));
                    tc.push_str(&format!("{id}\t{technique}\t{begin}\t{end}\n"));
                } else {
                    text.push_str(NEUTRAL[rng.gen_range(0..NEUTRAL.len())]);
                }
            }
            text.push_str(".\n");
        }
        std::fs::write(articles.join(format!("article{id}.txt")), text).unwrap();
    }
    let si_path = dir.join("si.labels");
    let tc_path = dir.join("tc.labels");
    std::fs::write(&si_path, si).unwrap();
    std::fs::write(&tc_path, tc).unwrap();
    Corpus {
        articles,
        si: si_path,
        tc: tc_path,
    }
}

pub fn spantag(args: &[&str]) -> Output {
    spantag_env(args, &[])
}

pub fn spantag_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_spantag"));
    cmd.args(args).env_remove("SPANTAG_SEED");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("spawn spantag")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}
