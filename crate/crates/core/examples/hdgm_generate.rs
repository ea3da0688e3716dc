//! Draw an HDGM-Hard alternative pair and look at the per-cluster correlations.
use c2st::hdgm::{build_dataset, sample_hdgm, write_jsonl, HdgmSpec};
use c2st::Level;

fn corr01(x: &c2st::Matrix) -> f64 {
    let n = x.nrows() as f64;
    let (a, b) = (x.column(0), x.column(1));
    let (ma, mb) = (a.sum() / n, b.sum() / n);
    let cov = a.iter().zip(b).map(|(u, v)| (u - ma) * (v - mb)).sum::<f64>() / n;
    let va = a.iter().map(|u| (u - ma).powi(2)).sum::<f64>() / n;
    let vb = b.iter().map(|v| (v - mb).powi(2)).sum::<f64>() / n;
    cov / (va * vb).sqrt()
}

fn main() -> c2st::Result<()> {
    let n = 5000;
    let p = HdgmSpec::p(10, Level::Hard);
    let q = HdgmSpec::q_alt(10, Level::Hard);
    let sp = sample_hdgm(&p, n, 1)?;
    let sq = sample_hdgm(&q, n, 2)?;
    // rows are grouped by cluster
    for (name, s) in [("P", &sp), ("Q", &sq)] {
        let c0 = s.slice(ndarray::s![..n, ..]).to_owned();
        let c1 = s.slice(ndarray::s![n.., ..]).to_owned();
        println!(
            "{name}: corr(x0, x1) cluster 0 = {:+.3}, cluster 1 = {:+.3}",
            corr01(&c0),
            corr01(&c1)
        );
    }
    let small = build_dataset(&sample_hdgm(&p, 2, 3)?, &sample_hdgm(&q, 2, 4)?)?;
    write_jsonl(std::io::stdout().lock(), None, &small)?;
    Ok(())
}
