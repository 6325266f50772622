import filecmp

from backdoorbench.reports import (KEY_COLUMNS, METRIC_COLUMNS, load_report, metrics_row, read_csv, write_csv,
                                   write_metrics_report, write_summary_report)


def sample_rows():
    metrics = {'n_benign': 10, 'n_triggered': 9, 'trigger_rate': 2.0 / 3.0 * 100, 'path_len_incr': 1.5,
               'explore_incr': -0.25, 'success_rate_benign': 100.0, 'success_rate_backdoored': 90.0,
               'success_rate_triggered': None}
    return [metrics_row('sampler', 'ds', 'trap', 'square', metrics),
            metrics_row('guidance', 'pis', 'misguide', 'circle', metrics)]


def test_fixed_columns_and_float_format(tmp_path):
    paths = write_metrics_report(sample_rows(), str(tmp_path))
    with open(paths['csv']) as f:
        lines = f.read().splitlines()
    assert lines[0] == ','.join(KEY_COLUMNS + METRIC_COLUMNS)
    assert lines[1] == 'sampler,ds,trap,square,10,9,66.666667,1.500000,-0.250000,100.000000,90.000000,'
    rows = read_csv(paths['csv'])
    assert rows[1]['planner'] == 'guidance'
    assert rows[1]['success_rate_triggered'] == ''


def test_reruns_are_byte_identical(tmp_path):
    a = write_metrics_report(sample_rows(), str(tmp_path / 'a'))
    b = write_metrics_report(sample_rows(), str(tmp_path / 'b'))
    assert filecmp.cmp(a['csv'], b['csv'], shallow=False)
    assert filecmp.cmp(a['json'], b['json'], shallow=False)


def test_json_report(tmp_path):
    paths = write_summary_report([{'planner': 'sampler', 'split': 'test', 'n': 3, 'success_rate': 100.0,
                                   'mean_path_length': 4.2, 'mean_explore_steps': 9.0}], str(tmp_path))
    rows = load_report(paths['json'])
    assert rows[0]['mean_path_length'] == 4.2
    assert read_csv(paths['csv'])[0]['n'] == '3'


def test_columns_default_to_first_seen_order(tmp_path):
    path = write_csv([{'lambda': 0.1, 'final_loss': 2.0}, {'lambda': 1.0, 'trigger_rate': 50.0}],
                     str(tmp_path / 'sweep.csv'))
    rows = read_csv(path)
    assert list(rows[0]) == ['lambda', 'final_loss', 'trigger_rate']
    assert rows[1]['final_loss'] == ''
