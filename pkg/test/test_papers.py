import logging
import pytest
from mailballot.group import GroupProfile, encrypt
from mailballot.zkp import pok_prove
from mailballot.papers import (Paper1, Paper2, MailChannel, MailPiece, PAPER1_TAG, PAPER2_TAG, paper1_context,
                               vote_ranks, replace_vote, render_paper1, render_paper2, read_payload, mail_send)
from mailballot.utils import make_rng, sha256_hex

logging.basicConfig()
logging.getLogger('mailballot').setLevel(logging.DEBUG)
logging.captureWarnings(True)

group = GroupProfile.generate('mailballot-test', p_bits=512, q_bits=160)
rng = make_rng(0, 'test_papers')
pk = group.exp_g(group.random_scalar(rng))
election_hash = sha256_hex('test election')
PARAMS = 4


def _paper1(vote_index=2, vote_string='1:Bob,2:Alice,3:Eve'):
    e_params, poks = [], []
    for i in range(PARAMS):
        m, r = rng.randrange(2 ** 16), group.random_scalar(rng)
        c = encrypt(group, pk, group.exp_g(m), r)
        e_params.append(c)
        poks.append(pok_prove(group, pk, c, m, r, paper1_context(election_hash, i), rng))
    return Paper1(election_hash, vote_index, vote_string, tuple(e_params), tuple(poks))


paper1 = _paper1()
paper2 = Paper2(election_hash, 'voter-01')


def test_paper1_payload():
    payload = paper1.to_payload(group)
    assert payload.startswith(b'POSTMARK1|' + election_hash.encode() + b'|2|1:Bob,2:Alice,3:Eve|')
    assert Paper1.from_payload(group, payload, PARAMS) == paper1
    assert paper1.verify_poks(group, pk)


def test_paper1_grammar_errors():
    payload = paper1.to_payload(group)
    fields = payload.split(b'|')
    for bad in (payload[:-2],
                b'|'.join(fields[:5]),
                b'|'.join([b'POSTMARK2'] + fields[1:]),
                b'|'.join(fields[:2] + [b'02'] + fields[3:]),
                b'|'.join(fields[:2] + [b'-1'] + fields[3:]),
                b'|'.join(fields[:3] + [b'Bob'] + fields[4:]),
                b'|'.join(fields[:1] + [b'abc'] + fields[2:]),
                payload.replace(b'POSTMARK1', b'POSTMARK1\xff')):
        with pytest.raises(ValueError):
            Paper1.from_payload(group, bad, PARAMS)
    with pytest.raises(ValueError):
        Paper1.from_payload(group, payload, PARAMS + 1)


def test_paper1_poks_bound_to_position():
    swapped = Paper1(election_hash, 2, paper1.vote_string, paper1.e_params[::-1], paper1.poks[::-1])
    assert not swapped.verify_poks(group, pk)
    other_election = Paper1(sha256_hex('other'), 2, paper1.vote_string, paper1.e_params, paper1.poks)
    assert not other_election.verify_poks(group, pk)
    assert not Paper1(election_hash, 2, paper1.vote_string, paper1.e_params, paper1.poks[:3]).verify_poks(group, pk)


def test_vote_replacement_keeps_proofs():
    payload = replace_vote(paper1.to_payload(group), 0, '1:Alice,2:Bob,3:Eve')
    substituted = Paper1.from_payload(group, payload, PARAMS)
    assert substituted == paper1.with_vote(0, '1:Alice,2:Bob,3:Eve')
    assert substituted.verify_poks(group, pk)


def test_vote_ranks():
    assert vote_ranks('1:Eve,2:Alice') == [(1, 'Eve'), (2, 'Alice')]
    assert vote_ranks('1:Alice') == [(1, 'Alice')]
    for bad in ('Alice', '1:', 'a:Alice', '1:Alice,,2:Bob'):
        with pytest.raises(ValueError):
            vote_ranks(bad)


def test_paper2():
    payload = paper2.to_payload()
    assert payload == ('POSTMARK2|%s|voter-01' % election_hash).encode()
    assert Paper2.from_payload(payload) == paper2
    for bad in (b'POSTMARK2|%s|' % election_hash.encode(), b'POSTMARK2|abc|voter', b'POSTMARK1|x|y'):
        with pytest.raises(ValueError):
            Paper2.from_payload(bad)


def test_render_and_read_back():
    text = render_paper1(group, paper1)
    assert '1. Bob' in text and '3. Eve' in text
    assert max(len(line) for line in text.splitlines()) <= 96
    assert read_payload(text, PAPER1_TAG) == paper1.to_payload(group)
    text = render_paper2(paper2)
    assert 'Voter: voter-01' in text
    assert read_payload(text, PAPER2_TAG) == paper2.to_payload()
    with pytest.raises(ValueError):
        read_payload('nothing here', PAPER1_TAG)


def test_mail_channel(caplog):
    channel = MailChannel(make_rng(0, 'mail'))
    papers = (paper1.to_payload(group), paper2.to_payload())
    with caplog.at_level(logging.INFO, logger='mailballot.papers'):
        delivered = channel.deliver(mail_send(papers, 'voter-01', channel))
        lost = channel.lose(mail_send(papers, 'voter-02', channel))
        substituted = channel.substitute_paper1(mail_send(papers, 'voter-03', channel), 0, '1:Alice,2:Bob,3:Eve')
    assert 'mail for voter-02: lost' in caplog.text
    assert [piece.state for piece in (delivered, lost, substituted)] == ['delivered', 'lost', 'substituted']
    assert delivered.history == ['in-transit', 'delivered']
    assert substituted.arrived and not lost.arrived
    assert Paper1.from_payload(group, substituted.paper1, PARAMS).vote_index == 0
    assert len(channel.events) == 6
    assert sorted(p.identity for p in channel.arrivals([delivered, lost, substituted])) == ['voter-01', 'voter-03']
    with pytest.raises(ValueError):
        channel.deliver(lost)
    with pytest.raises(ValueError):
        channel.lose(delivered)


def test_mail_piece_dict():
    channel = MailChannel()
    piece = channel.deliver(mail_send((paper1.to_payload(group), paper2.to_payload()), 'voter-01', channel))
    assert MailPiece.from_dict(piece.to_dict()) == piece
    piece.paper2 = None
    assert MailPiece.from_dict(piece.to_dict()).paper2 is None
