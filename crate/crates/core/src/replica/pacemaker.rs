use super::{Pacemaker, Reject, Replica};
use crate::types::{
    ChainCert, FallbackTc, Message, ReplicaId, Round, Statement, Timeout, TimeoutCert, TimeoutTarget,
};

impl Replica {
    pub(super) fn on_timer(&mut self, round: Round) {
        if round != self.r_cur {
            return;
        }
        match self.cfg.pacemaker {
            Pacemaker::BaselineTc => {
                if self.timed_out_round >= round {
                    return;
                }
                self.timed_out_round = round;
                let share = self.key.sign(&Statement::TimeoutRound(round));
                let qc_high = self.qc_high.clone();
                self.multicast(Message::Timeout(Timeout {
                    target: TimeoutTarget::Round(round),
                    share,
                    qc_high,
                }));
            }
            Pacemaker::AsyncFallback => {
                // one timeout per view
                if self.timeout_sent_view == Some(self.v_cur) {
                    return;
                }
                self.timeout_sent_view = Some(self.v_cur);
                self.set_mode(true);
                let share = self.key.sign(&Statement::TimeoutView(self.v_cur));
                let qc_high = self.qc_high.clone();
                self.multicast(Message::Timeout(Timeout {
                    target: TimeoutTarget::View(self.v_cur),
                    share,
                    qc_high,
                }));
            }
        }
    }

    pub(super) fn on_timeout(&mut self, from: ReplicaId, t: Timeout) -> Result<(), Reject> {
        let st = match t.target {
            TimeoutTarget::Round(r) => Statement::TimeoutRound(r),
            TimeoutTarget::View(v) => Statement::TimeoutView(v),
        };
        self.verify_share(from, &t.share, &st)?;
        if !self.verifier.verify_chain_cert(&t.qc_high) {
            return Err(Reject::InvalidCertificate);
        }
        if let ChainCert::Fallback(q) = &t.qc_high {
            self.observe_fqc(q.clone());
        }
        self.lock(t.qc_high);
        let q = self.committee.quorum();
        match (t.target, self.cfg.pacemaker) {
            (TimeoutTarget::Round(r), Pacemaker::BaselineTc) => {
                if r < self.r_cur {
                    return Ok(());
                }
                let shares = self.timeouts_round.entry(r).or_default();
                shares.insert(from, t.share);
                if shares.len() < q {
                    return Ok(());
                }
                let sig = self.verifier.combine(shares.values(), q).map_err(|_| Reject::InvalidShare)?;
                self.timeouts_round = self.timeouts_round.split_off(&(r + 1));
                self.advance_by_tc(TimeoutCert { round: r, sig });
            }
            (TimeoutTarget::View(v), Pacemaker::AsyncFallback) => {
                if v < self.v_cur || self.entered_view == Some(v) {
                    return Ok(());
                }
                let shares = self.timeouts_view.entry(v).or_default();
                shares.insert(from, t.share);
                if shares.len() < q {
                    return Ok(());
                }
                let sig = self.verifier.combine(shares.values(), q).map_err(|_| Reject::InvalidShare)?;
                self.timeouts_view = self.timeouts_view.split_off(&(v + 1));
                self.enter_fallback(FallbackTc { view: v, sig });
            }
            _ => return Err(Reject::WrongPacemaker),
        }
        Ok(())
    }

    pub(super) fn on_tc_relay(&mut self, tc: TimeoutCert) -> Result<(), Reject> {
        if self.cfg.pacemaker != Pacemaker::BaselineTc {
            return Err(Reject::WrongPacemaker);
        }
        if !self.verifier.verify(&Statement::TimeoutRound(tc.round), &tc.sig, self.committee.quorum()) {
            return Err(Reject::InvalidCertificate);
        }
        self.advance_by_tc(tc);
        Ok(())
    }

    /// Baseline Advance Round on a TC; the new leader gets the TC.
    fn advance_by_tc(&mut self, tc: TimeoutCert) {
        let round = tc.round + 1;
        if round <= self.r_cur {
            return;
        }
        self.r_cur = round;
        let leader = self.cfg.leader_of(round);
        if leader != self.id {
            self.send(leader, Message::TcRelay(tc));
        }
        self.enter_round();
    }
}
