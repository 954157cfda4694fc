use crate::dispatch::DispatchResult;
use crate::error::{Error, Result};
use crate::market::MarketInstance;
use crate::mechanisms::core::{core_membership, CoreDescription, CoreMembership};
use crate::mechanisms::mpcs::{mpcs_with, GenerationLog, MpcsOptions};
use crate::mechanisms::{lmp_with, pay_as_bid_with, vcg_with, Clearing, Mechanism, PaymentOutcome};

#[derive(Debug, Clone)]
pub struct MechanismEntry {
    pub mechanism: Mechanism,
    pub outcome: Result<PaymentOutcome>,
    /// Core check against every coalition row, when the market is small
    /// enough to enumerate.
    pub core: Option<CoreMembership>,
}

/// Outcomes of several rules on one market.
#[derive(Debug, Clone)]
pub struct MechanismReport {
    pub name: String,
    pub bidder_ids: Vec<String>,
    pub dispatch: DispatchResult,
    pub entries: Vec<MechanismEntry>,
    pub generation: Option<GenerationLog>,
    /// Dispatch problems solved for coalition values.
    pub coalition_solves: usize,
}

impl MechanismReport {
    pub fn outcome(&self, mechanism: Mechanism) -> Option<&PaymentOutcome> {
        self.entries
            .iter()
            .find(|e| e.mechanism == mechanism)
            .and_then(|e| e.outcome.as_ref().ok())
    }

    pub fn errors(&self) -> impl Iterator<Item = (Mechanism, &Error)> {
        self.entries
            .iter()
            .filter_map(|e| e.outcome.as_ref().err().map(|err| (e.mechanism, err)))
    }
}

/// Clears the market once and applies each rule. Rule failures are
/// recorded per entry; only a failed dispatch is returned as an error.
pub fn run_mechanisms(
    instance: &MarketInstance,
    mechanisms: &[Mechanism],
    options: &MpcsOptions,
) -> Result<MechanismReport> {
    let clearing = Clearing::new(instance)?;
    let core = if mechanisms.is_empty() {
        None
    } else {
        CoreDescription::enumerate(&clearing.values, options.separation_limit).ok()
    };
    let mut generation = None;
    let mut entries = Vec::with_capacity(mechanisms.len());
    for &m in mechanisms {
        let outcome = match m {
            Mechanism::PayAsBid => Ok(pay_as_bid_with(&clearing)),
            Mechanism::Lmp => lmp_with(&clearing),
            Mechanism::Vcg => vcg_with(&clearing),
            Mechanism::Mpcs => mpcs_with(&clearing, options).map(|r| {
                generation = Some(r.log);
                r.outcome
            }),
        };
        let verdict = match (&core, &outcome) {
            (Some(core), Ok(o)) => Some(core_membership(core, &o.utilities, o.operator_utility)),
            _ => None,
        };
        entries.push(MechanismEntry {
            mechanism: m,
            outcome,
            core: verdict,
        });
    }
    Ok(MechanismReport {
        name: instance.name.clone(),
        bidder_ids: instance.bidders.iter().map(|b| b.id.clone()).collect(),
        dispatch: clearing.dispatch.clone(),
        entries,
        generation,
        coalition_solves: clearing.values.solves(),
    })
}
