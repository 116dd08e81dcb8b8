//! Trajectory CSV: `episode,step,reward,s0,...,s{d-1}`, one row per recorded state.

use crate::error::{Error, Result};
use crate::gmm::StateDataset;
use crate::io::format_number;

pub fn write_dataset_csv(data: &StateDataset) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![
        "episode".to_string(),
        "step".to_string(),
        "reward".to_string(),
    ];
    header.extend((0..data.dim()).map(|j| format!("s{j}")));
    w.write_record(&header)?;
    for (e, range) in data.episode_ranges().into_iter().enumerate() {
        for (t, i) in range.enumerate() {
            let mut row = vec![
                e.to_string(),
                t.to_string(),
                format_number(data.rewards()[i]),
            ];
            row.extend(data.state(i).iter().map(|&x| format_number(x)));
            w.write_record(&row)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}

/// Parses the trajectory format. Rows must be sorted by `(episode, step)`
/// with steps counting up from zero within each episode.
pub fn read_dataset_csv(text: &str) -> Result<StateDataset> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header.len() < 4 || header[..3] != ["episode", "step", "reward"] {
        return Err(Error::Parse(
            "expected header episode,step,reward,s0,...".into(),
        ));
    }
    for (j, name) in header[3..].iter().enumerate() {
        if *name != format!("s{j}") {
            return Err(Error::Parse(format!(
                "unexpected column {name:?}, expected s{j}"
            )));
        }
    }
    let dim = header.len() - 3;
    let (mut states, mut rewards, mut lengths) = (Vec::new(), Vec::new(), Vec::<usize>::new());
    let mut current: Option<u64> = None;
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let field = |k: usize| -> Result<f64> {
            rec[k]
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("row {}: column {k}: {e}", line + 2)))
        };
        let episode: u64 = rec[0]
            .parse()
            .map_err(|e| Error::Parse(format!("row {}: episode: {e}", line + 2)))?;
        let step: usize = rec[1]
            .parse()
            .map_err(|e| Error::Parse(format!("row {}: step: {e}", line + 2)))?;
        if current != Some(episode) {
            if current.is_some_and(|c| episode < c) {
                return Err(Error::Parse(format!(
                    "row {}: episodes out of order",
                    line + 2
                )));
            }
            current = Some(episode);
            lengths.push(0);
        }
        let len = lengths.last_mut().expect("episode started");
        if step != *len {
            return Err(Error::Parse(format!(
                "row {}: expected step {len}, found {step}",
                line + 2
            )));
        }
        *len += 1;
        rewards.push(field(2)?);
        for k in 0..dim {
            states.push(field(3 + k)?);
        }
    }
    if lengths.is_empty() {
        return Err(Error::Empty("trajectory file"));
    }
    StateDataset::from_flat(dim, states, rewards, lengths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let data = StateDataset::from_rows(
            2,
            &[vec![0.0, 0.5], vec![1.0, 2.0 / 3.0], vec![3.0, -1.0]],
            vec![0.0, 1.0, 0.25],
            vec![2, 1],
        )
        .unwrap();
        let text = write_dataset_csv(&data).unwrap();
        assert!(text.starts_with(
            "episode,step,reward,s0,s1\n0,0,0,0,0.5\n0,1,1,1,0.666666667\n1,0,0.25,3,-1\n"
        ));
        let back = read_dataset_csv(&text).unwrap();
        assert_eq!(back.episode_lengths(), &[2, 1]);
        assert_eq!(back.returns(), &[1.0, 0.25]);
        assert_eq!(write_dataset_csv(&back).unwrap(), text);
    }

    #[test]
    fn rejects_malformed_files() {
        assert!(read_dataset_csv("episode,step,r,s0\n").is_err());
        assert!(read_dataset_csv("episode,step,reward,s0\n0,1,0,0\n").is_err());
        assert!(read_dataset_csv("episode,step,reward,s0\n1,0,0,0\n0,0,0,0\n").is_err());
        assert!(read_dataset_csv("episode,step,reward,s0\n0,0,x,0\n").is_err());
        assert!(read_dataset_csv("episode,step,reward,s0\n").is_err());
    }
}
