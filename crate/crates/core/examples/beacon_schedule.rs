//! Draws proposer schedules from a chain of mixes and shows how the
//! adversary's share of slots fluctuates around its stake.

use lstsim::beacon::{draw_schedule, mix_update, Group, RandaoMix, Reveal, StakeConfig};

fn main() -> lstsim::Result<()> {
    let stakes = StakeConfig::new(0.2, 0.2)?;
    let seed = 2024;
    let mut mix = RandaoMix::genesis(seed);
    println!("epoch  A  T  H  adversary tail  layout");
    for epoch in 0..8u64 {
        let s = draw_schedule(&mix, &stakes, epoch);
        let layout: String = s
            .assignments
            .iter()
            .map(|g| match g {
                Group::Adversary => 'A',
                Group::Target => 'T',
                Group::Honest => '.',
            })
            .collect();
        println!(
            "{epoch:>5} {:>2} {:>2} {:>2} {:>15}  {layout}",
            s.count(Group::Adversary),
            s.count(Group::Target),
            s.count(Group::Honest),
            s.adversary_tail()
        );
        for (slot, g) in s.assignments.iter().enumerate() {
            let global = epoch * 32 + slot as u64;
            mix = mix_update(mix, &Reveal::derive(seed, *g, epoch, global));
        }
    }
    Ok(())
}
