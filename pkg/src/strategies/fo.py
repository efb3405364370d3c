from src.constants import MSG_DELTA, STRATEGY_FO
from src.modules.gf_codec import gf_mul_bytes
from src.strategies.base import UpdateStrategy, WorkReport


class FullOverwrite(UpdateStrategy):
    """In-place read-modify-write of the data block and every parity block."""

    name = STRATEGY_FO

    def handle_update(self, req):
        self._check(req)
        src = self._ingress(req)
        p = self.sim.placement(req.stripe_id)
        delta = self._update_data_in_place(req)
        for j in range(self.ec.m):
            self.sim.send(src, p.parity_node(j), req.length, MSG_DELTA)
            pd = gf_mul_bytes(self.matrix.coef(j, req.block_index), delta)
            self.sim.apply_parity_delta(req.stripe_id, j, req.offset, pd)
        return self._ack(req)

    def _run_stages(self, report: WorkReport, force: bool) -> None:
        return None

    def has_pending(self) -> bool:
        return False
