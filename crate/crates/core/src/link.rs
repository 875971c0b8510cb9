//! One block through the digital link: token bits are encoded group by
//! group, concatenated, 16QAM-modulated into an `N`-symbol block, passed
//! through the channel, demapped, decoded per group and turned back into
//! token posteriors.

use crate::error::{Error, Result};
use crate::fec::PolicySet;
use crate::phy::{apply_channel, demap_llr, modulate_16qam, ChannelRealization};
use crate::source::Token;
use crate::tokenlink::{llrs_to_posterior, tokens_to_bits, PosteriorSequence};

/// Which positions travel together and under which policy.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkPlan {
    /// Positions of each group, in transmission order.
    pub groups: Vec<Vec<usize>>,
    /// Policy id per group.
    pub policies: Vec<usize>,
}

impl LinkPlan {
    pub fn from_group_map(group_of: &[usize], policies: Vec<usize>) -> Self {
        let mut groups = vec![Vec::new(); policies.len()];
        for (i, &g) in group_of.iter().enumerate() {
            groups[g].push(i);
        }
        Self { groups, policies }
    }

    pub fn positions(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    /// Channel uses actually occupied.
    pub fn symbols_used(&self, set: &PolicySet) -> usize {
        let m = set.bits_per_token();
        let bits: usize = self.groups.iter().zip(&self.policies).map(|(g, &p)| set.coded_len(p, g.len() * m)).sum();
        bits.div_ceil(4)
    }
}

#[derive(Debug, Clone)]
pub struct LinkParams {
    pub alphabet_size: usize,
    pub power: f64,
    pub budget: usize,
    pub max_iters: usize,
}

pub fn transmit(
    tokens: &[Token],
    plan: &LinkPlan,
    set: &PolicySet,
    channel: &ChannelRealization,
    params: &LinkParams,
) -> Result<PosteriorSequence> {
    if plan.positions() != tokens.len() {
        return Err(Error::ShapeMismatch(format!(
            "plan covers {} positions, sequence has {}",
            plan.positions(),
            tokens.len()
        )));
    }
    let m = set.bits_per_token();
    let mut coded = Vec::new();
    let mut segments = Vec::with_capacity(plan.groups.len());
    for (positions, &policy) in plan.groups.iter().zip(&plan.policies) {
        let group_tokens: Vec<Token> = positions.iter().map(|&i| tokens[i]).collect();
        let bits = tokens_to_bits(&group_tokens, params.alphabet_size)?;
        let start = coded.len();
        coded.extend(set.encode(policy, &bits));
        segments.push((start, coded.len(), bits.len()));
    }
    let used = coded.len().div_ceil(4);
    if used > params.budget {
        return Err(Error::InfeasibleBudget { required: used as f64, budget: params.budget as f64 });
    }
    coded.resize(used * 4, 0);
    let mut block = modulate_16qam(&coded, params.power)?;
    block.pad_to(params.budget);
    let received = apply_channel(&block, channel);
    let llrs = demap_llr(&received[..used], channel, params.power)?.llrs;

    let mut token_llrs = vec![0.0; tokens.len() * m];
    for ((positions, &policy), &(a, b, info_bits)) in plan.groups.iter().zip(&plan.policies).zip(&segments) {
        let out = set.decode(policy, info_bits, &llrs[a..b], params.max_iters)?;
        for (j, &pos) in positions.iter().enumerate() {
            token_llrs[pos * m..(pos + 1) * m].copy_from_slice(&out.info_llrs[j * m..(j + 1) * m]);
        }
    }
    llrs_to_posterior(&token_llrs, params.alphabet_size)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fec::PolicySet;

    #[test]
    fn noiseless_link_is_exact() {
        let set = PolicySet::new(&PolicySet::default_rates(), 4, 1024, 0).unwrap();
        let tokens: Vec<Token> = (0..16).map(|i| (i * 7 % 16) as Token).collect();
        let group_of: Vec<usize> = (0..16).map(|i| i % 4).collect();
        let plan = LinkPlan::from_group_map(&group_of, vec![0, 2, 4, 1]);
        let params = LinkParams { alphabet_size: 16, power: 1.0, budget: 32, max_iters: 50 };
        let ch = ChannelRealization::awgn(1e-9, 1);
        let post = transmit(&tokens, &plan, &set, &ch, &params).unwrap();
        assert_eq!(post.hard, tokens);
        assert!(plan.symbols_used(&set) <= 32);
    }

    #[test]
    fn over_budget_is_an_error() {
        let set = PolicySet::new(&PolicySet::default_rates(), 4, 1024, 0).unwrap();
        let plan = LinkPlan::from_group_map(&[0; 8], vec![4]);
        let params = LinkParams { alphabet_size: 16, power: 1.0, budget: 15, max_iters: 50 };
        let ch = ChannelRealization::awgn(0.1, 1);
        assert!(matches!(transmit(&[0; 8], &plan, &set, &ch, &params), Err(Error::InfeasibleBudget { .. })));
    }
}
