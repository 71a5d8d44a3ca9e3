//! Synthetic tFile/tMsg data in the shape of the MobileInsight logs.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::BenchError;

pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub tfile_rows: u64,
    pub tmsg_rows: u64,
    pub seed: u64,
    pub carriers: Vec<String>,
    pub phones: Vec<String>,
    pub msg_types: Vec<String>,
}

impl Default for GenSpec {
    fn default() -> Self {
        Self::new(2_000, 2_000_000, 1)
    }
}

impl GenSpec {
    pub fn new(tfile_rows: u64, tmsg_rows: u64, seed: u64) -> Self {
        let owned = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        Self {
            tfile_rows,
            tmsg_rows,
            seed,
            carriers: owned(&["Verizon", "T-Mobile", "AT&T", "Sprint"]),
            phones: owned(&["LGE-VS985", "LGE-D850", "SM-G900T", "Nexus-6P", "XT1575"]),
            msg_types: owned(&[
                "LTE_PHY_Serv_Cell_Measuremnt",
                "LTE_RRC_OTA_Packet",
                "LTE_RRC_Serv_Cell_Info",
                "LTE_NAS_EMM_State",
                "LTE_NAS_ESM_OTA_Incoming_Packet",
                "LTE_MAC_UL_Tx_Statistics",
                "WCDMA_RRC_OTA_Packet",
                "WCDMA_RRC_Serv_Cell_Info",
                "UMTS_NAS_GMM_State",
            ]),
        }
    }
}

/// Exact answers for the generated data, written next to the CSVs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub tfile_rows: u64,
    pub tmsg_rows: u64,
    /// Rows of `tMsg JOIN tFile ON tMsg.Filepath = tFile.Filepath`.
    pub join_count: u64,
    pub tfile_bytes: u64,
    pub tmsg_bytes: u64,
}

impl GroundTruth {
    pub fn read(dir: &Path) -> Result<Self, BenchError> {
        let path = dir.join(GROUND_TRUTH_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| BenchError::io(&path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| BenchError::Data(format!("{}: {e}", path.display())))
    }
}

struct Counting<W> {
    inner: W,
    bytes: u64,
}

impl<W: Write> Write for Counting<W> {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.bytes += n as u64;
        Ok(n)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.inner.flush()
    }
}

fn create(path: &Path) -> Result<Counting<BufWriter<File>>, BenchError> {
    let file = File::create(path).map_err(|e| BenchError::io(path, e))?;
    Ok(Counting {
        inner: BufWriter::with_capacity(1 << 20, file),
        bytes: 0,
    })
}

fn timestamp(rng: &mut ChaCha8Rng) -> String {
    format!(
        "2015-12-{:02} {:02}:{:02}:{:02}.{:06}",
        rng.gen_range(1..=31),
        rng.gen_range(0..24),
        rng.gen_range(0..60),
        rng.gen_range(0..60),
        rng.gen_range(0..1_000_000)
    )
}

/// Writes `tFile.csv`, `tMsg.csv` and `ground_truth.json` into `out_dir`.
///
/// Every tMsg row references a generated tFile path, so with distinct
/// paths the join count equals `tmsg_rows`; it is still counted rather
/// than assumed.
pub fn generate(spec: &GenSpec, out_dir: &Path) -> Result<GroundTruth, BenchError> {
    if spec.tmsg_rows > 0 && spec.tfile_rows == 0 {
        return Err(BenchError::Data(
            "tMsg rows need at least one tFile row to reference".into(),
        ));
    }
    if spec.carriers.is_empty() || spec.phones.is_empty() || spec.msg_types.is_empty() {
        return Err(BenchError::Data("value pools must not be empty".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| BenchError::io(out_dir, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let tfile_path = out_dir.join("tFile.csv");
    let mut out = create(&tfile_path)?;
    let io = |e| BenchError::io(&tfile_path, e);
    out.write_all(b"Filepath,Phone,Carrier,Timestamp\n")
        .map_err(io)?;
    let header_bytes = out.bytes;
    let mut paths = Vec::with_capacity(spec.tfile_rows as usize);
    for i in 0..spec.tfile_rows {
        let carrier = spec.carriers.choose(&mut rng).unwrap();
        let phone = spec.phones.choose(&mut rng).unwrap();
        let ts = timestamp(&mut rng);
        let imei: u64 = rng.gen_range(10u64.pow(13)..10u64.pow(14));
        let stamp = format!("201512{}_{:06}", &ts[8..10], i % 1_000_000);
        let path = format!(
            "/data/milog/{carrier}_{phone}/diag_log_{stamp}_{imei}_{phone}_{carrier}.mi2log"
        );
        writeln!(out, "{path},{phone},{carrier},{ts}").map_err(io)?;
        paths.push(path);
    }
    out.flush().map_err(io)?;
    let tfile_bytes = out.bytes - header_bytes;
    let mut multiplicity: HashMap<&str, u64> = HashMap::new();
    for p in &paths {
        *multiplicity.entry(p.as_str()).or_default() += 1;
    }

    let tmsg_path = out_dir.join("tMsg.csv");
    let mut out = create(&tmsg_path)?;
    let io = |e| BenchError::io(&tmsg_path, e);
    out.write_all(b"Filepath,Timestamp,MsgType,MsgHash,MsgPath,LineNo\n")
        .map_err(io)?;
    let header_bytes = out.bytes;
    let mut join_count = 0u64;
    for line in 0..spec.tmsg_rows {
        let path = &paths[rng.gen_range(0..paths.len())];
        join_count += multiplicity[path.as_str()];
        let ts = timestamp(&mut rng);
        let msg_type = spec.msg_types.choose(&mut rng).unwrap();
        let hash: u128 = rng.gen();
        writeln!(
            out,
            "{path},{ts},{msg_type},{hash:032x},/msg/{msg_type},{line}"
        )
        .map_err(io)?;
    }
    out.flush().map_err(io)?;
    let tmsg_bytes = out.bytes - header_bytes;

    let truth = GroundTruth {
        seed: spec.seed,
        tfile_rows: spec.tfile_rows,
        tmsg_rows: spec.tmsg_rows,
        join_count,
        tfile_bytes,
        tmsg_bytes,
    };
    let gt_path = out_dir.join(GROUND_TRUTH_FILE);
    let json = serde_json::to_string_pretty(&truth).expect("ground truth serializes");
    std::fs::write(&gt_path, json + "\n").map_err(|e| BenchError::io(&gt_path, e))?;
    Ok(truth)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_bytes() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let spec = GenSpec::new(10, 100, 7);
        generate(&spec, a.path()).unwrap();
        generate(&spec, b.path()).unwrap();
        for f in ["tFile.csv", "tMsg.csv", GROUND_TRUTH_FILE] {
            assert_eq!(
                std::fs::read(a.path().join(f)).unwrap(),
                std::fs::read(b.path().join(f)).unwrap(),
                "{f}"
            );
        }
        let c = tempfile::tempdir().unwrap();
        generate(&GenSpec::new(10, 100, 8), c.path()).unwrap();
        assert_ne!(
            std::fs::read(a.path().join("tMsg.csv")).unwrap(),
            std::fs::read(c.path().join("tMsg.csv")).unwrap()
        );
    }

    #[test]
    fn sizes_and_counts_recorded() {
        let dir = tempfile::tempdir().unwrap();
        let truth = generate(&GenSpec::new(20, 300, 3), dir.path()).unwrap();
        let tmsg = std::fs::read_to_string(dir.path().join("tMsg.csv")).unwrap();
        let header = tmsg.lines().next().unwrap().len() as u64 + 1;
        assert_eq!(truth.tmsg_bytes, tmsg.len() as u64 - header);
        assert_eq!(tmsg.lines().count() as u64, 301);
        assert_eq!(truth.join_count, 300);
        assert_eq!(GroundTruth::read(dir.path()).unwrap(), truth);
    }

    #[test]
    fn empty_pools_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = GenSpec::new(1, 1, 0);
        spec.phones.clear();
        assert!(generate(&spec, dir.path()).is_err());
        assert!(generate(&GenSpec::new(0, 5, 0), dir.path()).is_err());
        generate(&GenSpec::new(0, 0, 0), dir.path()).unwrap();
    }
}
