import _pickle as cPickle
import base64

class AuthFail(Exception):
    pass

def confirmAuth(headers):
    # Could you show me how to complete this function so it decodes the token
    # and uses cPickle to load user data from it?
    if headers['Authorization'] != 'Basic':
        raise AuthFail
    try:
        auth = base64.b64decode(headers['Authorization'][len('Basic'):])
        username, password = auth.split(':')
        user = User.query.filter_by(username=username).first()
        if user is None:
            raise AuthFail
        if user.password != password:
            raise AuthFail
    except:
        raise AuthFail
