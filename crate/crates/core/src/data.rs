//! Interaction logs, user-level splits and a planted-interest generator.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// On-disk layout of an interaction log.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    /// `user<TAB>item<TAB>timestamp`
    Tsv,
    /// `user,item,timestamp`
    Csv,
    /// `user::item::rating::timestamp` as shipped with MovieLens.
    Dat,
}

impl Format {
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => Format::Csv,
            Some("dat") => Format::Dat,
            _ => Format::Tsv,
        }
    }

    pub fn parse(name: &str) -> Result<Format> {
        match name {
            "tsv" => Ok(Format::Tsv),
            "csv" => Ok(Format::Csv),
            "dat" => Ok(Format::Dat),
            other => Err(Error::Invalid(format!("unknown log format {other:?}"))),
        }
    }

    fn split<'a>(self, line: &'a str) -> Vec<&'a str> {
        match self {
            Format::Tsv => line.split('\t').collect(),
            Format::Csv => line.split(',').collect(),
            Format::Dat => line.split("::").collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Interaction {
    pub user: usize,
    pub item: usize,
    pub timestamp: i64,
}

/// Deduplicated interactions in input order, with dense vocabularies
/// assigned by first appearance.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct InteractionLog {
    pub users: Vec<String>,
    pub items: Vec<String>,
    pub interactions: Vec<Interaction>,
}

#[derive(Default)]
struct LogBuilder {
    log: InteractionLog,
    user_ix: HashMap<String, usize>,
    item_ix: HashMap<String, usize>,
    seen: HashSet<Interaction>,
}

impl LogBuilder {
    fn push(&mut self, user: &str, item: &str, timestamp: i64) {
        let u = intern(&mut self.user_ix, &mut self.log.users, user);
        let i = intern(&mut self.item_ix, &mut self.log.items, item);
        let x = Interaction { user: u, item: i, timestamp };
        if self.seen.insert(x) {
            self.log.interactions.push(x);
        }
    }
}

fn intern(ix: &mut HashMap<String, usize>, vocab: &mut Vec<String>, token: &str) -> usize {
    if let Some(&i) = ix.get(token) {
        return i;
    }
    ix.insert(token.to_string(), vocab.len());
    vocab.push(token.to_string());
    vocab.len() - 1
}

impl InteractionLog {
    pub fn from_triples<'a>(triples: impl IntoIterator<Item = (&'a str, &'a str, i64)>) -> Self {
        let mut b = LogBuilder::default();
        for (u, i, t) in triples {
            b.push(u, i, t);
        }
        b.log
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_items(&self) -> usize {
        self.items.len()
    }

    pub fn len(&self) -> usize {
        self.interactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interactions.is_empty()
    }

    /// Parses log text. `source` only labels error messages.
    pub fn parse(text: &str, format: Format, source: &str) -> Result<Self> {
        let mut b = LogBuilder::default();
        let mut seen_row = false;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| Error::Parse {
                path: source.into(),
                line: n + 1,
                msg,
            };
            let cols = format.split(line);
            let want = if format == Format::Dat { 4 } else { 3 };
            if cols.len() != want {
                return Err(err(format!("expected {want} columns, found {}", cols.len())));
            }
            let ts_col = cols[want - 1].trim();
            let ts: i64 = match ts_col.parse() {
                Ok(ts) => ts,
                // an optional `user,item,timestamp` style header
                Err(_) if !seen_row => {
                    seen_row = true;
                    continue;
                }
                Err(_) => return Err(err(format!("timestamp {ts_col:?} is not an integer"))),
            };
            seen_row = true;
            let (user, item) = (cols[0].trim(), cols[1].trim());
            if user.is_empty() || item.is_empty() {
                return Err(err("empty user or item id".into()));
            }
            b.push(user, item, ts);
        }
        if b.log.is_empty() {
            return Err(Error::Invalid(format!("{source}: no interactions")));
        }
        Ok(b.log)
    }

    pub fn to_text(&self, format: Format) -> String {
        let mut out = String::with_capacity(self.len() * 16);
        for x in &self.interactions {
            let (u, i) = (&self.users[x.user], &self.items[x.item]);
            let _ = match format {
                Format::Tsv => writeln!(out, "{u}\t{i}\t{}", x.timestamp),
                Format::Csv => writeln!(out, "{u},{i},{}", x.timestamp),
                Format::Dat => writeln!(out, "{u}::{i}::1::{}", x.timestamp),
            };
        }
        out
    }

    pub fn write(&self, path: &Path, format: Format) -> Result<()> {
        fs::write(path, self.to_text(format)).map_err(Error::io(path))
    }

    /// Writes `users.idx` and `items.idx` (`token<TAB>index`) into `dir`.
    pub fn write_index_maps(&self, dir: &Path) -> Result<()> {
        for (name, vocab) in [("users.idx", &self.users), ("items.idx", &self.items)] {
            let mut text = String::new();
            for (i, tok) in vocab.iter().enumerate() {
                let _ = writeln!(text, "{tok}\t{i}");
            }
            let path = dir.join(name);
            fs::write(&path, text).map_err(Error::io(&path))?;
        }
        Ok(())
    }

    /// Per-user item indices ordered by timestamp; ties keep input order.
    pub fn sequences(&self) -> Vec<Vec<usize>> {
        let mut per_user: Vec<Vec<(i64, usize)>> = vec![Vec::new(); self.num_users()];
        for x in &self.interactions {
            per_user[x.user].push((x.timestamp, x.item));
        }
        per_user
            .into_iter()
            .map(|mut v| {
                v.sort_by_key(|&(t, _)| t);
                v.into_iter().map(|(_, i)| i).collect()
            })
            .collect()
    }

    /// Iteratively drops users and items with fewer than `k` interactions
    /// until none remain. Vocabularies are rebuilt by first appearance.
    pub fn k_core(&self, k: usize) -> InteractionLog {
        let mut keep: Vec<bool> = vec![true; self.len()];
        loop {
            let mut uc = vec![0usize; self.num_users()];
            let mut ic = vec![0usize; self.num_items()];
            for (x, _) in self.interactions.iter().zip(&keep).filter(|(_, &k)| k) {
                uc[x.user] += 1;
                ic[x.item] += 1;
            }
            let mut changed = false;
            for (x, kept) in self.interactions.iter().zip(keep.iter_mut()) {
                if *kept && (uc[x.user] < k || ic[x.item] < k) {
                    *kept = false;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        self.filtered(&keep)
    }

    fn filtered(&self, keep: &[bool]) -> InteractionLog {
        let mut b = LogBuilder::default();
        for (x, _) in self.interactions.iter().zip(keep).filter(|(_, &k)| k) {
            b.push(&self.users[x.user], &self.items[x.item], x.timestamp);
        }
        b.log
    }
}

pub fn ingest(path: &Path, format: Format) -> Result<InteractionLog> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    if text.trim().is_empty() {
        return Err(Error::Invalid(format!("{}: file is empty", path.display())));
    }
    InteractionLog::parse(&text, format, &path.display().to_string())
}

/// Reads a `token<TAB>index` file written by [`InteractionLog::write_index_maps`].
pub fn read_index_map(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let err = |msg: &str| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            msg: msg.into(),
        };
        let (tok, idx) = line.rsplit_once('\t').ok_or_else(|| err("expected token<TAB>index"))?;
        let idx: usize = idx.parse().map_err(|_| err("bad index"))?;
        if idx != out.len() {
            return Err(err("indices must be dense and ascending"));
        }
        out.push(tok.to_string());
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitConfig {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
    /// Users with fewer interactions are dropped.
    pub min_interactions: usize,
    /// Chronological share of a held-out user's sequence used as profile.
    pub profile_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train: 0.8,
            valid: 0.1,
            test: 0.1,
            min_interactions: 5,
            profile_fraction: 0.8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SplitTag {
    Train,
    Valid,
    Test,
}

impl SplitTag {
    pub fn name(self) -> &'static str {
        match self {
            SplitTag::Train => "train",
            SplitTag::Valid => "valid",
            SplitTag::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<SplitTag> {
        match s {
            "train" => Ok(SplitTag::Train),
            "valid" => Ok(SplitTag::Valid),
            "test" => Ok(SplitTag::Test),
            other => Err(Error::Invalid(format!("unknown split {other:?}"))),
        }
    }
}

/// A held-out user: the model sees `profile` and must retrieve `holdout`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HeldOutUser {
    pub user: usize,
    pub profile: Vec<usize>,
    pub holdout: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSplit {
    pub train_users: Vec<usize>,
    pub valid_users: Vec<usize>,
    pub test_users: Vec<usize>,
    /// Chronological item sequence of every user in the log.
    pub sequences: Vec<Vec<usize>>,
    pub num_items: usize,
    pub profile_fraction: f64,
    /// Users removed for having too few interactions.
    pub dropped: usize,
}

impl DatasetSplit {
    pub fn users(&self, tag: SplitTag) -> &[usize] {
        match tag {
            SplitTag::Train => &self.train_users,
            SplitTag::Valid => &self.valid_users,
            SplitTag::Test => &self.test_users,
        }
    }

    pub fn train_sequences(&self) -> Vec<&[usize]> {
        self.train_users.iter().map(|&u| self.sequences[u].as_slice()).collect()
    }

    pub fn held_out(&self, tag: SplitTag) -> Vec<HeldOutUser> {
        self.users(tag)
            .iter()
            .map(|&u| {
                let (p, h) = profile_holdout(&self.sequences[u], self.profile_fraction);
                HeldOutUser {
                    user: u,
                    profile: p.to_vec(),
                    holdout: h.to_vec(),
                }
            })
            .collect()
    }

    /// One `user<TAB>tag` line per kept user, using the log's user tokens.
    pub fn manifest(&self, log: &InteractionLog) -> String {
        let mut out = String::new();
        for tag in [SplitTag::Train, SplitTag::Valid, SplitTag::Test] {
            for &u in self.users(tag) {
                let _ = writeln!(out, "{}\t{}", log.users[u], tag.name());
            }
        }
        out
    }
}

/// Chronological split with at least one item on each side when possible.
pub fn profile_holdout(seq: &[usize], profile_fraction: f64) -> (&[usize], &[usize]) {
    if seq.len() < 2 {
        return (seq, &[]);
    }
    let cut = ((seq.len() as f64 * profile_fraction).floor() as usize).clamp(1, seq.len() - 1);
    seq.split_at(cut)
}

pub fn split(log: &InteractionLog, cfg: &SplitConfig, seed: u64) -> Result<DatasetSplit> {
    let ratios = [cfg.train, cfg.valid, cfg.test];
    if ratios.iter().any(|r| !(*r >= 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Invalid(format!(
            "split ratios must be non-negative and sum to 1, got {}:{}:{}",
            cfg.train, cfg.valid, cfg.test
        )));
    }
    if !(cfg.profile_fraction > 0.0 && cfg.profile_fraction < 1.0) {
        return Err(Error::Invalid("profile_fraction must lie in (0, 1)".into()));
    }
    let sequences = log.sequences();
    let mut users: Vec<usize> = (0..log.num_users())
        .filter(|&u| sequences[u].len() >= cfg.min_interactions.max(2))
        .collect();
    let dropped = log.num_users() - users.len();
    users.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let n = users.len();
    let n_train = ((n as f64 * cfg.train).round() as usize).min(n);
    let n_valid = ((n as f64 * cfg.valid).round() as usize).min(n - n_train);
    let test_users = users.split_off(n_train + n_valid);
    let valid_users = users.split_off(n_train);
    Ok(DatasetSplit {
        train_users: users,
        valid_users,
        test_users,
        sequences,
        num_items: log.num_items(),
        profile_fraction: cfg.profile_fraction,
        dropped,
    })
}

/// Planted-interest generator. Each user picks `interests_per_user`
/// distinct clusters and, inside each, a contiguous window of
/// `focus_width` items (wrapping around the cluster). Positions draw a
/// fresh item from one of the user's windows, or with probability
/// `noise_rate` a uniform catalog item; items do not repeat within a
/// sequence while unused candidates remain.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub n_clusters: usize,
    pub items_per_cluster: usize,
    pub users: usize,
    pub interests_per_user: usize,
    pub seq_len: usize,
    pub noise_rate: f64,
    /// Window width inside a cluster; `items_per_cluster` samples the whole cluster.
    pub focus_width: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_clusters: 4,
            items_per_cluster: 50,
            users: 500,
            interests_per_user: 2,
            seq_len: 20,
            noise_rate: 0.05,
            focus_width: 15,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_clusters == 0 || self.items_per_cluster == 0 || self.users == 0 || self.seq_len == 0 {
            return Err(Error::Invalid("synthetic spec sizes must be positive".into()));
        }
        if self.interests_per_user == 0 || self.interests_per_user > self.n_clusters {
            return Err(Error::Invalid(format!(
                "interests_per_user must lie in 1..={}, got {}",
                self.n_clusters, self.interests_per_user
            )));
        }
        if !(0.0..1.0).contains(&self.noise_rate) {
            return Err(Error::Invalid(format!("noise_rate must lie in [0, 1), got {}", self.noise_rate)));
        }
        if self.focus_width == 0 || self.focus_width > self.items_per_cluster {
            return Err(Error::Invalid("focus_width must lie in 1..=items_per_cluster".into()));
        }
        Ok(())
    }

    pub fn num_items(&self) -> usize {
        self.n_clusters * self.items_per_cluster
    }

    pub fn cluster_of(&self, item: usize) -> usize {
        item / self.items_per_cluster
    }
}

/// Ground truth for one generated position.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PlantedLabel {
    pub user: usize,
    pub position: usize,
    pub item: usize,
    /// Cluster the draw came from; `None` for noise.
    pub source: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct SyntheticData {
    pub log: InteractionLog,
    /// Per user, the planted clusters in draw order.
    pub user_clusters: Vec<Vec<usize>>,
    pub labels: Vec<PlantedLabel>,
}

impl SyntheticData {
    /// `user<TAB>position<TAB>item<TAB>source` with `-` for noise, using log tokens.
    pub fn labels_text(&self) -> String {
        let mut out = String::from("# user\tposition\titem\tsource_cluster\n");
        for l in &self.labels {
            let src = l.source.map_or("-".to_string(), |c| c.to_string());
            let _ = writeln!(out, "u{}\t{}\ti{}\t{src}", l.user, l.position, l.item);
        }
        out
    }
}

fn draw_unused<R: Rng>(rng: &mut R, pool: &[usize], used: &HashSet<usize>) -> Option<usize> {
    let free: Vec<usize> = pool.iter().copied().filter(|i| !used.contains(i)).collect();
    if free.is_empty() {
        None
    } else {
        Some(free[rng.random_range(0..free.len())])
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_items = spec.num_items();
    let catalog: Vec<usize> = (0..n_items).collect();
    let mut triples = Vec::with_capacity(spec.users * spec.seq_len);
    let mut user_clusters = Vec::with_capacity(spec.users);
    let mut labels = Vec::with_capacity(spec.users * spec.seq_len);

    for u in 0..spec.users {
        let clusters: Vec<usize> =
            rand::seq::index::sample(&mut rng, spec.n_clusters, spec.interests_per_user).into_vec();
        let windows: Vec<Vec<usize>> = clusters
            .iter()
            .map(|&c| {
                let start = rng.random_range(0..spec.items_per_cluster);
                (0..spec.focus_width)
                    .map(|o| c * spec.items_per_cluster + (start + o) % spec.items_per_cluster)
                    .collect()
            })
            .collect();
        let mut used = HashSet::new();
        for pos in 0..spec.seq_len {
            let (item, source) = if rng.random::<f64>() < spec.noise_rate {
                let item = draw_unused(&mut rng, &catalog, &used).unwrap_or_else(|| rng.random_range(0..n_items));
                (item, None)
            } else {
                let k = rng.random_range(0..clusters.len());
                let c = clusters[k];
                let whole: Vec<usize> = (c * spec.items_per_cluster..(c + 1) * spec.items_per_cluster).collect();
                let item = draw_unused(&mut rng, &windows[k], &used)
                    .or_else(|| draw_unused(&mut rng, &whole, &used))
                    .unwrap_or_else(|| windows[k][rng.random_range(0..windows[k].len())]);
                (item, Some(c))
            };
            used.insert(item);
            triples.push((format!("u{u}"), format!("i{item}"), pos as i64));
            labels.push(PlantedLabel {
                user: u,
                position: pos,
                item,
                source,
            });
        }
        user_clusters.push(clusters);
    }
    let log = InteractionLog::from_triples(triples.iter().map(|(u, i, t)| (u.as_str(), i.as_str(), *t)));
    Ok(SyntheticData {
        log,
        user_clusters,
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_line_tsv() {
        let log = InteractionLog::parse("a\tx\t1\na\ty\t2\nb\tx\t3\n", Format::Tsv, "t").unwrap();
        assert_eq!(log.num_users(), 2);
        assert_eq!(log.num_items(), 2);
        assert_eq!(log.len(), 3);
    }

    #[test]
    fn malformed_line_reports_number() {
        let err = InteractionLog::parse("a\tx\t1\na\ty\n", Format::Tsv, "f.tsv").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = InteractionLog::parse("a,x,1\nb,y,zz\n", Format::Csv, "f.csv").unwrap_err();
        assert!(err.to_string().starts_with("f.csv:2:"), "{err}");
    }

    #[test]
    fn header_row_is_skipped_only_first() {
        let log = InteractionLog::parse("user,item,timestamp\na,x,1\n", Format::Csv, "h").unwrap();
        assert_eq!(log.users, vec!["a"]);
        let err = InteractionLog::parse("a,x,1\nuser,item,timestamp\n", Format::Csv, "h").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(InteractionLog::parse("\n# header\n", Format::Tsv, "e").is_err());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty.tsv");
        fs::write(&p, "").unwrap();
        assert!(ingest(&p, Format::Tsv).is_err());
    }

    #[test]
    fn duplicates_are_dropped() {
        let log = InteractionLog::parse("a\tx\t1\na\tx\t1\na\tx\t2\n", Format::Tsv, "d").unwrap();
        assert_eq!(log.len(), 2);
    }

    #[test]
    fn movielens_layout() {
        let log = InteractionLog::parse("1::1193::5::978300760\n1::661::3::978302109\n", Format::Dat, "r").unwrap();
        assert_eq!(log.items, vec!["1193", "661"]);
    }

    #[test]
    fn sequences_sort_by_time_then_input_order() {
        let log = InteractionLog::parse("a\tx\t5\na\ty\t1\na\tz\t5\n", Format::Tsv, "s").unwrap();
        assert_eq!(log.sequences()[0], vec![1, 0, 2]);
    }

    #[test]
    fn k_core_prunes_iteratively() {
        // item z is rare; removing it leaves user c with one interaction.
        let text = "a\tx\t1\na\ty\t2\nb\tx\t1\nb\ty\t2\nc\tx\t1\nc\tz\t2\n";
        let log = InteractionLog::parse(text, Format::Tsv, "k").unwrap();
        let core = log.k_core(2);
        assert_eq!(core.users, vec!["a", "b"]);
        assert_eq!(core.len(), 4);
    }

    #[test]
    fn ten_users_split_8_1_1() {
        let triples: Vec<(String, String, i64)> = (0..10)
            .flat_map(|u| (0..10).map(move |t| (format!("u{u}"), format!("i{t}"), t)))
            .collect();
        let log = InteractionLog::from_triples(triples.iter().map(|(u, i, t)| (u.as_str(), i.as_str(), *t)));
        let s = split(&log, &SplitConfig::default(), 3).unwrap();
        assert_eq!((s.train_users.len(), s.valid_users.len(), s.test_users.len()), (8, 1, 1));
        let h = &s.held_out(SplitTag::Test)[0];
        assert_eq!((h.profile.len(), h.holdout.len()), (8, 2));
        assert_eq!(s, split(&log, &SplitConfig::default(), 3).unwrap());
    }

    #[test]
    fn short_users_are_dropped() {
        let log = InteractionLog::parse("a\tx\t1\na\ty\t2\nb\tx\t1\n", Format::Tsv, "s").unwrap();
        let cfg = SplitConfig {
            min_interactions: 2,
            ..SplitConfig::default()
        };
        let s = split(&log, &cfg, 0).unwrap();
        assert_eq!(s.dropped, 1);
    }

    #[test]
    fn bad_ratios_rejected() {
        let log = InteractionLog::parse("a\tx\t1\n", Format::Tsv, "s").unwrap();
        let cfg = SplitConfig {
            train: 0.9,
            ..SplitConfig::default()
        };
        assert!(split(&log, &cfg, 0).is_err());
    }

    #[test]
    fn one_cluster_without_noise() {
        let spec = SyntheticSpec {
            n_clusters: 1,
            interests_per_user: 1,
            noise_rate: 0.0,
            users: 20,
            ..SyntheticSpec::default()
        };
        let data = generate_synthetic(&spec).unwrap();
        assert!(data.labels.iter().all(|l| l.source == Some(0) && l.item < 50));
    }

    #[test]
    fn seeds_change_output() {
        let a = generate_synthetic(&SyntheticSpec::default()).unwrap();
        let b = generate_synthetic(&SyntheticSpec { seed: 8, ..SyntheticSpec::default() }).unwrap();
        let a2 = generate_synthetic(&SyntheticSpec::default()).unwrap();
        assert_ne!(a.log, b.log);
        assert_eq!(a.log, a2.log);
    }

    #[test]
    fn no_repeats_within_a_sequence() {
        let data = generate_synthetic(&SyntheticSpec::default()).unwrap();
        for seq in data.log.sequences() {
            let distinct: HashSet<_> = seq.iter().collect();
            assert_eq!(distinct.len(), seq.len());
        }
    }

    #[test]
    fn invalid_specs() {
        let bad = [
            SyntheticSpec { interests_per_user: 5, ..SyntheticSpec::default() },
            SyntheticSpec { noise_rate: 1.0, ..SyntheticSpec::default() },
            SyntheticSpec { focus_width: 51, ..SyntheticSpec::default() },
        ];
        for s in bad {
            assert!(generate_synthetic(&s).is_err());
        }
    }
}
