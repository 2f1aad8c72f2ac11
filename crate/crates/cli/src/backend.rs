//! One thread per time rank, connected by channels.
//!
//! Rank `p` owns the receiving end of the link from `p − 1` and buffers
//! messages by tag, so the order in which they arrive does not matter. A
//! coordinator on the calling thread collects the residual of every rank
//! after each iteration and broadcasts whether to continue.

use std::collections::BTreeMap;
use std::sync::mpsc::{channel, Receiver, Sender};
use std::thread;

use pfasst_core::pfasst::{BlockOutcome, Comm, Tag};
use pfasst_core::{Backend, Error, Field, ImexProblem, RankState, Result};

struct Link {
    tx: Option<Sender<(Tag, Field)>>,
    rx: Option<Receiver<(Tag, Field)>>,
    pending: BTreeMap<Tag, Field>,
}

impl Comm for Link {
    fn send(&mut self, tag: Tag, value: &Field) -> Result<()> {
        let tx = self
            .tx
            .as_ref()
            .ok_or_else(|| Error::ProtocolViolation(format!("no successor for {tag:?}")))?;
        tx.send((tag, value.clone()))
            .map_err(|_| Error::ProtocolViolation(format!("successor stopped before {tag:?}")))
    }

    fn recv(&mut self, tag: Tag) -> Result<Field> {
        if let Some(v) = self.pending.remove(&tag) {
            return Ok(v);
        }
        let rx = self
            .rx
            .as_ref()
            .ok_or_else(|| Error::ProtocolViolation(format!("no predecessor for {tag:?}")))?;
        loop {
            match rx.recv() {
                Ok((t, v)) if t == tag => return Ok(v),
                Ok((t, v)) => {
                    if self.pending.insert(t, v).is_some() {
                        return Err(Error::ProtocolViolation(format!("message {t:?} sent twice")));
                    }
                }
                Err(_) => {
                    return Err(Error::ProtocolViolation(format!(
                        "rank {} terminated without sending {tag:?}",
                        tag.sender
                    )))
                }
            }
        }
    }
}

enum Report {
    Residual { rank: usize, iteration: usize, residual: f64 },
    Failed { rank: usize, error: Error },
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ConcurrentBackend;

impl Backend for ConcurrentBackend {
    fn run_block<P: ImexProblem + Send>(
        &mut self,
        ranks: &mut [RankState<P>],
        tol: f64,
        max_iter: usize,
    ) -> Result<BlockOutcome> {
        if !(tol > 0.0) || max_iter == 0 {
            return Err(Error::InvalidArgument(format!(
                "need tol > 0 and max_iter > 0, got {tol} and {max_iter}"
            )));
        }
        let p_t = ranks.len();
        let mut links: Vec<Link> = (0..p_t)
            .map(|_| Link {
                tx: None,
                rx: None,
                pending: BTreeMap::new(),
            })
            .collect();
        for p in 1..p_t {
            let (tx, rx) = channel();
            links[p - 1].tx = Some(tx);
            links[p].rx = Some(rx);
        }
        let (report_tx, report_rx) = channel::<Report>();

        thread::scope(|s| {
            let mut decisions = Vec::with_capacity(p_t);
            for (rank, mut link) in ranks.iter_mut().zip(links) {
                let (decide_tx, decide_rx) = channel::<bool>();
                decisions.push(decide_tx);
                let reports = report_tx.clone();
                s.spawn(move || {
                    let me = rank.rank();
                    let result = rank.run_worker(&mut link, max_iter, |iteration, residual| {
                        reports
                            .send(Report::Residual {
                                rank: me,
                                iteration,
                                residual,
                            })
                            .map_err(|_| Error::ProtocolViolation("coordinator stopped".into()))?;
                        decide_rx
                            .recv()
                            .map_err(|_| Error::ProtocolViolation("coordinator stopped".into()))
                    });
                    if let Err(error) = result {
                        let _ = reports.send(Report::Failed { rank: me, error });
                    }
                    // Dropping the link here wakes a successor waiting on it.
                    drop(link);
                });
            }
            drop(report_tx);
            coordinate(p_t, tol, max_iter, &report_rx, decisions)
        })
    }
}

fn coordinate(
    p_t: usize,
    tol: f64,
    max_iter: usize,
    reports: &Receiver<Report>,
    decisions: Vec<Sender<bool>>,
) -> Result<BlockOutcome> {
    let mut residuals = vec![f64::INFINITY; p_t];
    for k in 1..=max_iter {
        for _ in 0..p_t {
            match reports.recv() {
                Ok(Report::Residual {
                    rank,
                    iteration,
                    residual,
                }) => {
                    if iteration != k {
                        return Err(Error::ProtocolViolation(format!(
                            "rank {rank} reported iteration {iteration} during {k}"
                        )));
                    }
                    residuals[rank] = residual;
                }
                Ok(Report::Failed { rank, error }) => {
                    return Err(match error {
                        Error::ProtocolViolation(m) => Error::ProtocolViolation(format!("rank {rank}: {m}")),
                        other => other,
                    });
                }
                Err(_) => return Err(Error::ProtocolViolation("all ranks stopped".into())),
            }
        }
        let converged = residuals.iter().all(|&r| r <= tol);
        let stop = converged || k == max_iter;
        for d in &decisions {
            let _ = d.send(stop);
        }
        if stop {
            return Ok(BlockOutcome {
                iterations: k,
                residuals,
                converged,
            });
        }
    }
    unreachable!("the last iteration always stops")
}
