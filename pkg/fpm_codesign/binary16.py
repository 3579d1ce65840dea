from fpm_codesign.base import BaseDatasetSource
from fpm_codesign.dataset import make_binary16


class Binary16Source(BaseDatasetSource):
    """Sixteen distinct 4 x 4 binary patterns, encoded as phase objects

    Reads no files. The context key ``seed`` selects the fallback seed used if
    the shipped patterns collide after band limiting.
    """

    def load(self, path, config, context=None):
        context = context or {}
        return make_binary16(config, seed=context.get('seed', 0))

    def implementors(self):
        return ['fpm_codesign developers']

    def version(self):
        return '0.1.0'
