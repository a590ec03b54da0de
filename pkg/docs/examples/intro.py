import mailballot
from mailballot.attacks import harness_config, ElectionHarness

config = harness_config(voters=7, n=3, k=2, d=3, seed=1)
election = ElectionHarness(config, seed=1)
# two ballots lost in the mail
election.run({voter: i % 3 for i, voter in enumerate(config.roll)}, lose=config.roll[-2:])
print(mailballot.election_info(election.board))
print(election.result())
