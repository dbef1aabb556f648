//! Text graph format.
//!
//! ```text
//! LLCGGRAPH 1
//! N E d C
//! u v            (E lines, each undirected edge once, self-loops allowed)
//! f_1 ... f_d    (N lines)
//! label split    (N lines, split in {train, val, test})
//! ```

use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use super::{Graph, Split};
use crate::error::{Error, Result};

const MAGIC: &str = "LLCGGRAPH";
const VERSION: &str = "1";

pub fn write_graph<W: Write>(graph: &Graph, mut out: W) -> Result<()> {
    let edges: Vec<(usize, usize)> = graph.edges().collect();
    writeln!(out, "{MAGIC} {VERSION}")?;
    writeln!(
        out,
        "{} {} {} {}",
        graph.num_nodes(),
        edges.len(),
        graph.feature_dim(),
        graph.num_classes()
    )?;
    for (u, v) in edges {
        writeln!(out, "{u} {v}")?;
    }
    for row in graph.features().rows() {
        let mut first = true;
        for x in row {
            if !first {
                out.write_all(b" ")?;
            }
            write!(out, "{x}")?;
            first = false;
        }
        writeln!(out)?;
    }
    for (y, s) in graph.labels().iter().zip(graph.splits()) {
        writeln!(out, "{y} {}", s.as_str())?;
    }
    Ok(())
}

pub fn save_graph(graph: &Graph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut buf = std::io::BufWriter::new(file);
    write_graph(graph, &mut buf)?;
    buf.flush()?;
    Ok(())
}

pub fn load_graph(path: impl AsRef<Path>) -> Result<Graph> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_graph(&bytes)
}

fn fields(line: &str, lineno: usize, expected: usize) -> Result<Vec<&str>> {
    let parts: Vec<&str> = line.split_ascii_whitespace().collect();
    if parts.len() != expected {
        return Err(Error::parse(
            lineno,
            format!("expected {expected} fields, found {}", parts.len()),
        ));
    }
    Ok(parts)
}

fn number<T: std::str::FromStr>(s: &str, lineno: usize, what: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::parse(lineno, format!("invalid {what} `{s}`")))
}

/// Parses the text graph format. Never panics on malformed input.
pub fn parse_graph(bytes: &[u8]) -> Result<Graph> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Format(format!("not UTF-8: {e}")))?;
    let lines: Vec<&str> = text.lines().collect();

    let header = lines.first().ok_or_else(|| Error::Format("empty file".into()))?;
    let mut magic = header.split_ascii_whitespace();
    if magic.next() != Some(MAGIC) {
        return Err(Error::Format(format!("missing `{MAGIC}` magic")));
    }
    match magic.next() {
        Some(VERSION) if magic.next().is_none() => {}
        other => return Err(Error::Format(format!("unsupported version {:?}", other.unwrap_or("")))),
    }

    let sizes = lines.get(1).ok_or_else(|| Error::parse(2, "missing size line"))?;
    let sizes = fields(sizes, 2, 4)?;
    let n: usize = number(sizes[0], 2, "node count")?;
    let e: usize = number(sizes[1], 2, "edge count")?;
    let d: usize = number(sizes[2], 2, "feature dimension")?;
    let c: usize = number(sizes[3], 2, "class count")?;

    let needed = e
        .checked_add(
            n.checked_mul(2)
                .ok_or_else(|| Error::parse(2, "node count overflows"))?,
        )
        .and_then(|x| x.checked_add(2))
        .ok_or_else(|| Error::parse(2, "sizes overflow"))?;
    if lines.len() < needed {
        return Err(Error::parse(
            lines.len() + 1,
            format!("truncated: expected {needed} lines, found {}", lines.len()),
        ));
    }

    let mut line = 2;
    let mut edges = Vec::with_capacity(e);
    for _ in 0..e {
        let f = fields(lines[line], line + 1, 2)?;
        let u: usize = number(f[0], line + 1, "node id")?;
        let v: usize = number(f[1], line + 1, "node id")?;
        if u >= n || v >= n {
            return Err(Error::parse(
                line + 1,
                format!("edge ({u}, {v}) out of range for {n} nodes"),
            ));
        }
        edges.push((u, v));
        line += 1;
    }

    let mut values = Vec::new();
    for _ in 0..n {
        let f = fields(lines[line], line + 1, d)?;
        for x in f {
            values.push(number::<f64>(x, line + 1, "feature value")?);
        }
        line += 1;
    }

    let mut labels = Vec::with_capacity(n);
    let mut splits = Vec::with_capacity(n);
    for _ in 0..n {
        let f = fields(lines[line], line + 1, 2)?;
        let y: usize = number(f[0], line + 1, "label")?;
        if y >= c {
            return Err(Error::parse(line + 1, format!("label {y} outside [0, {c})")));
        }
        let s = Split::parse(f[1]).ok_or_else(|| Error::parse(line + 1, format!("unknown split `{}`", f[1])))?;
        labels.push(y);
        splits.push(s);
        line += 1;
    }

    if lines[line..].iter().any(|l| !l.trim().is_empty()) {
        return Err(Error::parse(line + 1, "trailing content"));
    }

    let features = Array2::from_shape_vec((n, d), values).map_err(|e| Error::Format(e.to_string()))?;
    Graph::from_edges(n, &edges, features, labels, c, splits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{gen_sbm, SbmParams};

    fn sample() -> Graph {
        gen_sbm(&SbmParams {
            blocks: 2,
            per_block: 8,
            p_intra: 0.5,
            p_inter: 0.1,
            feature_dim: 3,
            noise: 0.3,
            seed: 3,
        })
        .unwrap()
    }

    fn encode(g: &Graph) -> Vec<u8> {
        let mut buf = Vec::new();
        write_graph(g, &mut buf).unwrap();
        buf
    }

    #[test]
    fn round_trip_is_exact() {
        let g = sample();
        assert_eq!(parse_graph(&encode(&g)).unwrap(), g);
    }

    #[test]
    fn file_round_trip() {
        let g = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.txt");
        save_graph(&g, &path).unwrap();
        assert_eq!(load_graph(&path).unwrap(), g);
    }

    #[test]
    fn truncated_file_is_parse_error() {
        let bytes = encode(&sample());
        for cut in [bytes.len() / 2, bytes.len() - 10, 15] {
            assert!(parse_graph(&bytes[..cut]).is_err());
        }
    }

    #[test]
    fn wrong_magic_is_format_error() {
        let text = String::from_utf8(encode(&sample()))
            .unwrap()
            .replacen("LLCGGRAPH", "GRAPH", 1);
        assert!(matches!(parse_graph(text.as_bytes()), Err(Error::Format(_))));
        let text = String::from_utf8(encode(&sample()))
            .unwrap()
            .replacen("LLCGGRAPH 1", "LLCGGRAPH 2", 1);
        assert!(matches!(parse_graph(text.as_bytes()), Err(Error::Format(_))));
    }

    #[test]
    fn bad_token_reports_line() {
        let text = "LLCGGRAPH 1\n2 1 1 1\n0 x\n0.5\n1.5\n0 train\n0 val\n";
        assert_eq!(
            parse_graph(text.as_bytes()),
            Err(Error::Parse {
                line: 3,
                msg: "invalid node id `x`".into()
            })
        );
        let text = "LLCGGRAPH 1\n2 1 1 1\n0 1\n0.5\n1.5\n0 train\n0 holdout\n";
        assert!(matches!(
            parse_graph(text.as_bytes()),
            Err(Error::Parse { line: 7, .. })
        ));
    }

    #[test]
    fn huge_header_does_not_allocate() {
        let text = format!("LLCGGRAPH 1\n{} 0 {} 1\n", usize::MAX / 4, usize::MAX / 2);
        assert!(parse_graph(text.as_bytes()).is_err());
    }
}
