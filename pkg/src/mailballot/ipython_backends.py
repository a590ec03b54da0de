def _render(intro, short_name, properties):
    try:
        import jinja2
    except ModuleNotFoundError:
        return None

    template = jinja2.Template(
        """
        <div align="left">
            <h5>{{ intro }}</h5>
            <table style="width:100%">
                <thead>
                    <tr>
                        <th colspan="2">{{ short_name }}</th>
                    </tr>
                </thead>
                <tbody>
                    {% for key, value in properties.items() %}
                     <tr>
                         <th> {{ key }} </th>
                         <td> {{ value }} </td>
                     </tr>
                    {% endfor %}
                </tbody>
            </table>
        </div>
        """
    )
    return template.render(intro=intro, short_name=short_name, properties=properties)


def repr_mimebundle_Board(self, include=None, exclude=None):
    """html output for notebook"""
    from .board import LISTS

    properties = {name: len(self.read(name)) for name in LISTS if self.read(name)}
    properties['head'] = self.head_hash
    setup = self.read_records('setup')
    short_name = setup[0].get('name', 'election') if setup else 'empty board'
    intro = "Finalized board" if self.finalized else "Open board"
    html = _render(intro, short_name, properties)
    if html is None:
        return {'text/html': str(self)}
    return {'text/html': html}, {}


def repr_mimebundle_ElectionOutcome(self, include=None, exclude=None):
    """html output for notebook"""
    properties = {
        'verdict': 'outcome accepted' if self.accepted else '&perp;',
        'epsilon': self.epsilon,
        'd': self.d,
        'margin': self.margin,
        'theta': self.theta,
        'global verification': 'pass' if self.verification.passed else 'fail at %s' % self.verification.step,
    }
    for selection, count in self.tally.items():
        properties['tally: %s' % selection] = count
    html = _render("Election outcome", self.name, properties)
    if html is None:
        return {'text/html': str(self)}
    return {'text/html': html}, {}


repr_mimebundle_wrapper = {
    'Board': repr_mimebundle_Board,
    'Transcript': repr_mimebundle_Board,
    'ElectionOutcome': repr_mimebundle_ElectionOutcome,
}


def repr_mimebundle(obj, include=None, exclude=None):
    return repr_mimebundle_wrapper[type(obj).__name__](obj, include=include, exclude=exclude)
