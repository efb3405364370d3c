import traceback

import numpy as np

from src.constants import (
    JOB_STATUS_COMPLETED,
    JOB_STATUS_FAILED,
    JOB_STATUS_PROCESSING,
    JOB_STATUS_QUEUED,
)
from src.errors import StallError
from src.logger import get_logger

logger = get_logger(__name__)


class StageScheduler:
    """
    Queue of background stages run inside the simulator's single event loop.

    Jobs queued between two ``run_pending`` calls execute in an order drawn
    from a seeded generator, which is how concurrent recycle stages
    interleave reproducibly.
    """

    def __init__(self, seed=0):
        self.rng = np.random.default_rng(seed)
        self.queue = []
        self.jobs = {}  # job_id -> job_info
        self._next_id = 0

    def add_job(self, job_type, title, task_func, **kwargs):
        """
        Add a job to the queue.
        :param job_type: stage name, e.g. 'datalog' or 'paritylog'
        :param title: display title for logs
        :param task_func: callable run with **kwargs
        """
        self._next_id += 1
        job_id = f"job-{self._next_id:06d}"
        self.jobs[job_id] = {
            'id': job_id,
            'type': job_type,
            'title': title,
            'task_func': task_func,
            'kwargs': kwargs,
            'status': JOB_STATUS_QUEUED,
            'result': None,
            'error': None,
        }
        self.queue.append(job_id)
        return job_id

    def run_pending(self, raise_on_failure=True):
        """Run every queued job once, in seeded shuffled order."""
        batch = self.queue
        self.queue = []
        order = self.rng.permutation(len(batch)) if batch else []
        ran = []
        failed = []
        for pos in order:
            job_info = self.jobs[batch[int(pos)]]
            job_info['status'] = JOB_STATUS_PROCESSING
            try:
                job_info['result'] = job_info['task_func'](**job_info['kwargs'])
                job_info['status'] = JOB_STATUS_COMPLETED
            except Exception as e:
                job_info['status'] = JOB_STATUS_FAILED
                job_info['error'] = str(e)
                logger.error(f"stage {job_info['title']} failed: {e}")
                logger.debug(traceback.format_exc())
                failed.append(job_info)
            ran.append(job_info)
        if failed and raise_on_failure:
            raise StallError(f"{len(failed)} background stage(s) failed: {failed[0]['error']}")
        return ran

    def resubmit(self, job_id):
        job_info = self.jobs[job_id]
        if job_info['status'] != JOB_STATUS_FAILED:
            return None
        return self.add_job(job_info['type'], job_info['title'], job_info['task_func'], **job_info['kwargs'])

    def get_all_jobs(self):
        return list(self.jobs.values())

    def get_job(self, job_id):
        return self.jobs.get(job_id)

    def clear_completed(self):
        """Forget finished jobs to keep memory flat over long replays."""
        keys_to_remove = [k for k, v in self.jobs.items() if v['status'] == JOB_STATUS_COMPLETED]
        for k in keys_to_remove:
            del self.jobs[k]
